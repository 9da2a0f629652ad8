use carp_core::meanfield::solve_steady_state;
use carp_core::mle::{fit, log_likelihood, FitConfig};
use carp_core::synthetic::fixture_2013;
use carp_core::{risk_influence, Graph, MeanFieldConfig, ModelParams};

// closed forms written out here rather than taken from the library
fn fire(l: f64, e: f64) -> f64 {
    1.0 - (1.0 - l).powf(e)
}

fn external_fraction(g: &Graph, l: &[f64], p: &ModelParams, p_hat: &[f64], j: usize) -> f64 {
    let s: f64 = g.neighbors(j).iter().map(|&k| p_hat[k]).sum();
    let int = (1.0 - p_hat[j]) * fire(l[j], p.alpha);
    let ext = (1.0 - p_hat[j]) * fire(l[j], p.beta * s);
    let rec = p_hat[j] * (1.0 - l[j]).powf(p.gamma);
    if int + ext + rec == 0.0 {
        0.0
    } else {
        ext / (int + ext + rec)
    }
}

#[test]
fn fit_on_fixture_beats_generating_parameters() {
    let f = fixture_2013().unwrap();
    let l = f.network.likelihoods();
    let h = &f.run.history;
    let r = fit(h, &f.network.graph, &l, &FitConfig::default()).unwrap();
    let at_truth = log_likelihood(h, &f.network.graph, &l, &f.params).unwrap();
    assert!(r.log_likelihood >= at_truth - 1e-9, "{} < {}", r.log_likelihood, at_truth);
    assert!((r.params.alpha - f.params.alpha).abs() < 0.05, "{:?}", r.params);
    assert!((r.params.gamma - f.params.gamma).abs() < 0.5, "{:?}", r.params);
}

#[test]
fn steady_state_on_fixture_solves_the_closed_form() {
    let f = fixture_2013().unwrap();
    let (g, l, p) = (&f.network.graph, f.network.likelihoods(), f.params);
    let ss = solve_steady_state(&l, &p, g, &MeanFieldConfig::default()).unwrap();
    for (i, (&li, &pi)) in l.iter().zip(&ss.p_hat).enumerate() {
        let s: f64 = g.neighbors(i).iter().map(|&k| ss.p_hat[k]).sum();
        let a = fire(li, p.alpha + p.beta * s);
        let expect = a / (a + (1.0 - li).powf(p.gamma));
        assert!((pi - expect).abs() < 1e-10, "risk {i}");
    }
    assert!(!ss.multiple_fixed_points);
}

#[test]
fn influence_entries_match_knockout_solves() {
    let f = fixture_2013().unwrap();
    let g = &f.network.graph;
    let l = f.network.likelihoods();
    let p = ModelParams::new(0.05, 0.2, 1.0).unwrap();
    let cfg = MeanFieldConfig::default();
    let m = risk_influence(g, &l, &p, &cfg).unwrap();
    assert_eq!(m.len(), 50);
    assert!(m.anomalies.is_empty());

    let base = solve_steady_state(&l, &p, g, &cfg).unwrap().p_hat;
    for source in [0, 17, 42] {
        let mut knocked = l.clone();
        knocked[source] = 0.0;
        let ko = solve_steady_state(&knocked, &p, g, &cfg).unwrap().p_hat;
        for target in (0..50).filter(|&t| t != source) {
            let expect = external_fraction(g, &l, &p, &base, target) - external_fraction(g, &l, &p, &ko, target);
            let got = m.get(source, target).unwrap();
            assert!((got - expect).abs() < 1e-9, "{source}->{target}: {got} vs {expect}");
            if !g.has_edge(source, target) && g.components().iter().all(|c| !(c.contains(&source) && c.contains(&target))) {
                assert_eq!(got, 0.0);
            }
        }
    }
}
