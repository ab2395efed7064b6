use distexp::exponent::is_tie;
use distexp::{
    delta_line, exponent_breakpoints, interpolate_breakpoints, upper_bound_exponent, AntennaConfig,
    DmtCurve,
};
use proptest::prelude::*;

fn cfg(m_t: u32, m_r: u32) -> AntennaConfig {
    AntennaConfig::new(m_t, m_r).unwrap()
}

fn configs(max: u32) -> impl Iterator<Item = AntennaConfig> {
    (1..=max).flat_map(move |m_t| (1..=max).map(move |m_r| cfg(m_t, m_r)))
}

#[test]
fn corners_are_exact_up_to_eight_antennas() {
    for c in configs(8) {
        let curve = DmtCurve::new(c);
        assert_eq!(curve.corners().len() as u32, c.m_min() + 1);
        for corner in curve.corners() {
            assert_eq!(
                corner.diversity,
                (c.m_t() - corner.gain) * (c.m_r() - corner.gain)
            );
        }
        assert_eq!(curve.corners().last().unwrap().diversity, 0);
        let slopes = curve.segment_slopes();
        assert!(slopes.windows(2).all(|w| w[0] < w[1]), "{slopes:?}");
    }
}

#[test]
fn invert_round_trips_on_grid() {
    for c in configs(6) {
        let curve = DmtCurve::new(c);
        let top = c.full_diversity() as f64;
        for i in 0..=200 {
            let d = top * i as f64 / 200.0;
            let r = curve.invert(d).unwrap();
            assert!((0.0..=c.m_min() as f64).contains(&r));
            assert!((curve.eval(r).unwrap() - d).abs() < 1e-12, "{c:?} d={d}");
        }
    }
}

#[test]
fn supporting_line_stays_below_curve() {
    for c in configs(6) {
        let curve = DmtCurve::new(c);
        for i in 1..=200 {
            let b = 0.05 * i as f64;
            let line = delta_line(c, b).unwrap();
            let j = line.touch_corner as f64;
            assert!((line.intercept - (curve.eval(j).unwrap() + b * j)).abs() < 1e-12);
            assert!(line.intercept >= 0.0 && line.intercept <= c.full_diversity() as f64);
            for k in 0..=1000 {
                let r = c.m_min() as f64 * k as f64 / 1000.0;
                assert!(
                    line.height(r) <= curve.eval(r).unwrap() + 1e-12,
                    "{c:?} b={b} r={r}"
                );
            }
        }
    }
}

#[test]
fn exponent_is_concave_nondecreasing_and_saturates() {
    for c in configs(6) {
        let values: Vec<f64> = (0..=400)
            .map(|i| upper_bound_exponent(c, 0.05 * i as f64).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(values.windows(3).all(|w| w[1] - w[0] >= w[2] - w[1] - 1e-9));
        let sat = (c.m_t() + c.m_r() - 1) as f64;
        for i in 0..=40 {
            let b = sat + 0.25 * i as f64;
            assert_eq!(
                upper_bound_exponent(c, b).unwrap(),
                c.full_diversity() as f64
            );
        }
    }
}

#[test]
fn tie_flag_matches_segment_slopes() {
    for c in configs(5) {
        let curve = DmtCurve::new(c);
        for s in curve.segment_slopes() {
            assert!(delta_line(c, -s as f64).unwrap().tie);
            assert!(!delta_line(c, -s as f64 + 0.01).unwrap().tie);
        }
        assert!(!is_tie(c, 0.3));
    }
}

#[test]
fn breakpoints_reproduce_closed_form() {
    for c in configs(8) {
        let points = exponent_breakpoints(c);
        assert_eq!(points.len() as u32, c.m_min());
        assert_eq!(points.last().unwrap().b, c.m_t() + c.m_r() - 1);
        assert_eq!(points.last().unwrap().exponent, c.full_diversity());
        for i in 0..=400 {
            let b = 0.05 * i as f64;
            let got = interpolate_breakpoints(&points, b);
            assert!((got - upper_bound_exponent(c, b).unwrap()).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn dmt_is_convex(m_t in 1u32..=8, m_r in 1u32..=8, a in 0.0f64..1.0, t in 0.0f64..1.0, u in 0.0f64..1.0) {
        let curve = DmtCurve::new(cfg(m_t, m_r));
        let top = curve.max_gain() as f64;
        let mut pts = [a * top, t * top, u * top];
        pts.sort_by(f64::total_cmp);
        let [x0, x1, x2] = pts;
        prop_assume!(x2 - x0 > 1e-9);
        let w = (x1 - x0) / (x2 - x0);
        let chord = (1.0 - w) * curve.eval(x0).unwrap() + w * curve.eval(x2).unwrap();
        prop_assert!(curve.eval(x1).unwrap() <= chord + 1e-12);
    }

    #[test]
    fn dmt_is_nonincreasing(m_t in 1u32..=8, m_r in 1u32..=8, r1 in 0.0f64..10.0, dr in 0.0f64..5.0) {
        let curve = DmtCurve::new(cfg(m_t, m_r));
        prop_assert!(curve.eval(r1).unwrap() >= curve.eval(r1 + dr).unwrap());
    }

    #[test]
    fn closed_form_equals_supporting_line(m_t in 1u32..=8, m_r in 1u32..=8, b in 1e-3f64..25.0) {
        let c = cfg(m_t, m_r);
        let sum = upper_bound_exponent(c, b).unwrap();
        prop_assert!((sum - delta_line(c, b).unwrap().intercept).abs() < 1e-9);
    }
}
