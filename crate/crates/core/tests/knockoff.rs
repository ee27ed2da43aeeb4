mod common;

use common::rng;
use evmt_core::knockoff::{combine_and_select, knockoff_evalues, knockoff_threshold, KnockoffStatSet};
use evmt_core::ebh_select;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn draw(r: &mut impl Rng, p: usize, signals: usize) -> KnockoffStatSet {
    let w = (0..p)
        .map(|j| {
            let z: f64 = StandardNormal.sample(r);
            let v = if j < signals { 3.0 + z } else if r.random::<bool>() { z.abs() } else { -z.abs() };
            // occasional exact zeros and ties
            if r.random::<f64>() < 0.05 { 0.0 } else if r.random::<f64>() < 0.05 { 1.0 } else { v }
        })
        .collect();
    KnockoffStatSet::new(w).unwrap()
}

#[test]
fn ebh_reproduces_knockoff_selection() {
    let mut r = rng(77);
    for _ in 0..1000 {
        let p = r.random_range(5..200);
        let signals = r.random_range(0..p);
        let s = draw(&mut r, p, signals);
        let alpha = r.random_range(0.05..0.5);
        let th = knockoff_threshold(&s, alpha).unwrap();
        let e = knockoff_evalues(&s, alpha).unwrap();
        assert_eq!(ebh_select(&e, alpha).unwrap(), th.rejected);
    }
}

#[test]
fn threshold_matches_definition() {
    let mut r = rng(78);
    for _ in 0..300 {
        let p = r.random_range(5..100);
        let signals = r.random_range(0..p);
        let s = draw(&mut r, p, signals);
        let alpha = r.random_range(0.05..0.5);
        let w = s.as_slice();
        let expect = w
            .iter()
            .filter(|&&v| v != 0.0)
            .map(|v| v.abs())
            .filter(|&t| {
                let neg = w.iter().filter(|&&v| v <= -t).count();
                let pos = w.iter().filter(|&&v| v >= t).count();
                (1 + neg) as f64 <= alpha * pos as f64
            })
            .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))));
        assert_eq!(knockoff_threshold(&s, alpha).unwrap().threshold, expect);
    }
}

#[test]
fn combination_only_selects_supported_hypotheses() {
    let mut r = rng(79);
    for _ in 0..300 {
        let p = r.random_range(10..150);
        let a = draw(&mut r, p, p / 5);
        let b = draw(&mut r, p, p / 4);
        let c = combine_and_select(&a, &b, 0.2, 0.5, 0.5).unwrap();
        let ea = knockoff_evalues(&a, 0.1).unwrap();
        let eb = knockoff_evalues(&b, 0.1).unwrap();
        for &j in c.rejected.indices() {
            assert!(ea.as_slice()[j] > 0.0 || eb.as_slice()[j] > 0.0);
        }
    }
}

#[test]
fn combination_validates_arguments() {
    let a = KnockoffStatSet::new(vec![1.0, -1.0]).unwrap();
    let b = KnockoffStatSet::new(vec![1.0]).unwrap();
    assert!(combine_and_select(&a, &b, 0.1, 0.5, 0.5).is_err());
    assert!(combine_and_select(&a, &a, 0.1, 0.8, 0.5).is_err());
    assert!(combine_and_select(&a, &a, 0.1, -0.1, 0.5).is_err());
    assert!(KnockoffStatSet::new(vec![f64::INFINITY]).is_err());
}
