//! Reference values. The frozen numbers come from 40-digit evaluations of the
//! closed forms (mpmath), independent of this crate's bisection routines.

use bb84_flaws::entropy::{balance, balance_threshold, h2, Probability};
use bb84_flaws::keyrate::{
    bb84_threshold, effective_delta, loss_amplified_delta, misalignment_threshold, rate, rate_basis_independent,
    rate_delta_balanced, rate_ilm_double_click, rate_refined, rate_tagging, rate_tagging_simple,
    rate_trojan_pony, FlawModel, RefinedMode,
};
use bb84_flaws::wcp::{self, Link, WcpSource};

fn p(x: f64) -> Probability {
    Probability::new(x).unwrap()
}

fn close(got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "got {got:.17e}, want {want:.17e} +- {tol:e}");
}

#[test]
fn entropy_values() {
    close(h2(p(0.25)), 0.811_278_124_459_132_86, 1e-15);
    close(bb84_threshold().value(), 0.110_027_864_438_359_55, 1e-9);
    close(balance(p(0.01)).unwrap(), 0.165_752_927_652_401_00, 1e-9);
    close(balance(p(0.001)).unwrap(), 0.062_794_870_307_110_657, 1e-9);
    close(balance(p(0.1)).unwrap(), 0.379_427_449_987_165_97, 1e-9);
    close(balance_threshold().value(), 0.028_875_709_265_554_057, 1e-9);
}

#[test]
fn published_thresholds() {
    assert!((balance_threshold().value() - 0.0289).abs() < 1e-4);
    let deg = misalignment_threshold(p(0.0)).to_degrees();
    close(deg, 5.915_802_092_848_040, 1e-6);
    assert!((deg - 5.92).abs() < 0.01);
    let at = rate(&FlawModel::Misalignment {
        delta: 0.0,
        theta: 5.92f64.to_radians(),
    })
    .unwrap();
    assert!(at.raw.abs() < 1e-3, "{}", at.raw);
    let edge = rate_delta_balanced(p(0.0), p(0.0289)).unwrap();
    assert!(edge.raw.abs() < 1e-3);
    assert_eq!(loss_amplified_delta(p(0.01), p(0.5)).delta.value(), 0.02);
}

#[test]
fn model_rates() {
    let (d, big) = (p(0.05), p(0.1));
    close(rate_basis_independent(d).raw, 0.427_206_085_768_087_74, 1e-14);
    close(rate_delta_balanced(p(0.01), p(0.001)).unwrap().raw, 0.346_635_697_859_477_83, 1e-9);
    close(rate_tagging_simple(d, big).raw, 0.103_762_738_167_643_45, 1e-14);
    close(rate_tagging(d, big).raw, 0.335_013_956_648_751_24, 1e-14);
    close(rate_trojan_pony(d, big).raw, 0.076_641_971_536_516_418, 1e-14);
    close(rate_ilm_double_click(d, big).raw, 0.094_114_903_625_433_555, 1e-14);
    let refined = rate_refined(p(0.0), p(0.1), p(0.5), RefinedMode::BiasedEfficiency);
    close(refined.raw, 0.427_206_085_768_087_74, 1e-14);
}

#[test]
fn effective_balance_parameters() {
    let generic = effective_delta(&FlawModel::GenericIndividual { delta: 0.0, eps: 1e-4 }).unwrap();
    close(generic.value(), 0.0804, 1e-12);
    let theta = 0.010_633_5f64.sqrt().asin();
    let mis = effective_delta(&FlawModel::Misalignment { delta: 0.0, theta }).unwrap();
    close(mis.value(), std::f64::consts::E * 0.010_633_5, 1e-12);
}

#[test]
fn weak_coherent_values() {
    let s = wcp::photon_stats(0.1).unwrap();
    close(s.p0, 0.904_837_418_035_959_57, 1e-15);
    close(s.p1, 0.090_483_741_803_595_957, 1e-15);
    close(s.p_m, 0.004_678_840_160_444_469_5, 1e-15);
    close(wcp::photon_stats(0.01).unwrap().p_m, 4.966_791_334_026_589e-5, 1e-18);

    let link = Link::direct(0.1, 0.01).unwrap();
    close(wcp::detection_prob(0.01, &link).unwrap(), 9.950_166_250_831_946e-4, 1e-17);
    close(wcp::tag_fraction(0.01, &link).unwrap().delta.value(), 0.049_916_666_805_555_225, 1e-14);
    let dark_only = Link::fiber(0.0, 0.0, 0.0, 1e-5, 0.0).unwrap();
    close(wcp::detection_prob(0.01, &dark_only).unwrap(), 9.900_498_337_491_681e-6, 1e-19);
    let lossy = Link::direct(0.05, 0.0).unwrap();
    close(wcp::tag_fraction(0.1, &lossy).unwrap().delta.value(), 0.983_336_110_449_900_75, 1e-13);

    let b = wcp::budget(&WcpSource::new(0.01, 1e6).unwrap(), &link).unwrap();
    close(b.final_rate.raw, 0.789_239_617_789_603_90, 1e-13);
    close(b.throughput_hz, 392.653_270_437_481_07, 1e-9);
}
