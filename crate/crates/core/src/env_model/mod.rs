//! Environment laws, realized environments and the distribution-level
//! constants derived from them.

mod distribution;
mod environment;

pub use distribution::{
    bernoulli_rate, RegimeClass, RegimeTag, SiteDistribution, KAPPA_TOL, WEIGHT_SUM_TOL,
};
pub use environment::{Environment, Provenance};

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_distribution() -> impl Strategy<Value = SiteDistribution> {
        prop::collection::btree_set(5u32..=95, 1..5)
            .prop_flat_map(|points| {
                let n = points.len();
                (Just(points), prop::collection::vec(1u32..100, n))
            })
            .prop_map(|(points, raw)| {
                let total: u32 = raw.iter().sum();
                let mut support: Vec<(f64, f64)> = points
                    .iter()
                    .zip(&raw)
                    .map(|(&p, &w)| (p as f64 / 100.0, w as f64 / total as f64))
                    .collect();
                // Absorb rounding so the weights sum to one.
                let head: f64 = support[1..].iter().map(|s| s.1).sum();
                support[0].1 = 1.0 - head;
                SiteDistribution::new(support).unwrap()
            })
    }

    proptest! {
        #[test]
        fn classification_is_consistent(d in arb_distribution()) {
            let c = d.classify();
            let w_min = d.omega_min();
            match c.tag {
                RegimeTag::NotTransient => prop_assert!(d.mean_log_rho() >= 0.0),
                RegimeTag::Nestling => {
                    prop_assert!(w_min < 0.5 && d.mean_log_rho() < 0.0);
                    prop_assert!(d.support().iter().any(|s| s.0 > 0.5));
                }
                RegimeTag::MarginallyNestling => {
                    prop_assert!(w_min == 0.5 && c.alpha > 0.0 && c.alpha < 1.0);
                }
                RegimeTag::NonNestling => prop_assert!(w_min > 0.5),
            }
        }

        #[test]
        fn kappa_solves_moment_equation(d in arb_distribution()) {
            if d.classify().tag == RegimeTag::Nestling {
                let k = d.solve_kappa(KAPPA_TOL).unwrap();
                prop_assert!(k > 0.0);
                prop_assert!((d.rho_moment(k) - 1.0).abs() <= KAPPA_TOL);
                // speed > 0 exactly when κ > 1
                let v = d.speed().unwrap();
                prop_assert!(v >= 0.0);
                if (k - 1.0).abs() > 1e-6 {
                    prop_assert_eq!(v > 0.0, k > 1.0);
                }
            }
        }

        #[test]
        fn mn_transform_gives_marginal_with_same_alpha(d in arb_distribution(), seed in any::<u64>()) {
            if d.classify().tag == RegimeTag::NonNestling && d.support().len() > 1 {
                let t = d.mn_transformed().unwrap();
                let c = t.classify();
                prop_assert_eq!(c.tag, RegimeTag::MarginallyNestling);
                prop_assert_eq!(c.alpha, d.classify().alpha);

                let env = d.sample_environment(-20, 20, seed).unwrap();
                let te = d.mn_transform(&env).unwrap();
                for x in -20..=20 {
                    let (w, tw) = (env.omega(x).unwrap(), te.omega(x).unwrap());
                    prop_assert!(tw >= 0.5 - 1e-15);
                    prop_assert_eq!(tw == 0.5, w == d.omega_min());
                    for y in -20..=20 {
                        if w < env.omega(y).unwrap() {
                            prop_assert!(tw < te.omega(y).unwrap());
                        }
                    }
                }
            }
        }

        #[test]
        fn sampling_is_window_independent(d in arb_distribution(), seed in any::<u64>(), a in -1000i64..1000, len in 1i64..50) {
            let env = d.sample_environment(a, a + len, seed).unwrap();
            for x in a..=a + len {
                prop_assert_eq!(env.omega(x).unwrap(), d.site_value(seed, x));
                prop_assert!(env.omega(x).unwrap() >= d.ellipticity_c());
            }
        }
    }
}
