//! Toroidal shifts of the component types of a marked pattern.

use std::collections::BTreeMap;

use rand::Rng;

use super::pattern::PointPattern;
use crate::error::{Error, Result};
use crate::rng::Seed;

fn check_marked(p: &PointPattern) -> Result<Vec<u32>> {
    if p.marks().is_none() {
        return Err(Error::Parameter("random shift needs a marked pattern".into()));
    }
    let types = p.types();
    if types.len() < 2 {
        return Err(Error::Parameter(format!("random shift needs at least two types, found {}", types.len())));
    }
    Ok(types)
}

/// Translates every point of type `t` by `shifts[t]`, wrapping on the torus.
/// Types without an entry stay put.
pub fn shift_types(p: &PointPattern, shifts: &BTreeMap<u32, [f64; 2]>) -> Result<PointPattern> {
    check_marked(p)?;
    let w = *p.window();
    let marks = p.marks().unwrap_or_default();
    let points = p
        .points()
        .iter()
        .zip(marks)
        .map(|(&q, t)| match shifts.get(t) {
            Some(v) => w.wrap([q[0] + v[0], q[1] + v[1]]),
            None => q,
        })
        .collect();
    PointPattern::new(points, w, Some(marks.to_vec()))
}

/// Shifts each type not in `fixed_types` by an independent uniform vector.
/// Shift vectors are drawn in ascending type order.
pub fn random_shift(p: &PointPattern, fixed_types: &[u32], seed: Seed) -> Result<PointPattern> {
    let types = check_marked(p)?;
    let w = p.window();
    let mut rng = seed.rng();
    let shifts: BTreeMap<u32, [f64; 2]> = types
        .into_iter()
        .filter(|t| !fixed_types.contains(t))
        .map(|t| (t, [w.width() * rng.random::<f64>(), w.height() * rng.random::<f64>()]))
        .collect();
    shift_types(p, &shifts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::pattern::Window;

    fn marked() -> PointPattern {
        let pts = vec![[0.1, 0.2], [0.9, 0.95], [0.5, 0.5], [0.3, 0.7]];
        PointPattern::new(pts, Window::unit_square(), Some(vec![1, 2, 2, 3])).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let p = marked();
        let zero: BTreeMap<u32, [f64; 2]> = [(2, [0.0, 0.0]), (3, [0.0, 0.0])].into_iter().collect();
        assert_eq!(shift_types(&p, &zero).unwrap(), p);
    }

    #[test]
    fn fixed_types_stay_and_counts_are_kept() {
        let p = marked();
        let q = random_shift(&p, &[1], Seed::new(3)).unwrap();
        assert_eq!(q.points()[0], p.points()[0]);
        assert_eq!(q.marks(), p.marks());
        assert!(q.points().iter().all(|&x| q.window().contains(x)));
        assert_ne!(q.points()[2], p.points()[2]);
    }

    #[test]
    fn wraps_around() {
        let p = marked();
        let s: BTreeMap<u32, [f64; 2]> = [(2, [0.2, 0.1])].into_iter().collect();
        let q = shift_types(&p, &s).unwrap();
        let a = q.points()[1];
        assert!((a[0] - 0.1).abs() < 1e-12 && (a[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn rejects_unmarked() {
        let p = marked().unmarked();
        assert!(random_shift(&p, &[], Seed::new(1)).is_err());
        let one = PointPattern::new(vec![[0.5, 0.5]], Window::unit_square(), Some(vec![4])).unwrap();
        assert!(random_shift(&one, &[], Seed::new(1)).is_err());
    }
}
