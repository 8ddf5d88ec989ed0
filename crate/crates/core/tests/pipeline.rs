use cardiomr_core::driver::{run_adaptive, run_fv, Method, Snapshot};
use cardiomr_core::metrics::field_errors;
use cardiomr_core::{CellState, NodeKey, ScenarioConfig};

fn short_example1(level: u8, eps: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("example1").unwrap().with_level(level).with_eps(eps);
    cfg.t_end = 0.4;
    cfg.snapshot_times = vec![0.2, 0.4];
    cfg
}

fn collect(run: impl FnOnce(&mut dyn FnMut(&Snapshot) -> cardiomr_core::Result<()>)) -> Vec<Snapshot> {
    let mut out = Vec::new();
    run(&mut |s| {
        out.push(s.clone());
        Ok(())
    });
    out
}

#[test]
fn zero_tolerance_reproduces_the_uniform_scheme() {
    let cfg = short_example1(5, 0.0);
    let fv = collect(|obs| {
        run_fv(&cfg, 5, obs).unwrap();
    });
    let mr = collect(|obs| {
        run_adaptive(&cfg, Method::Mr, obs).unwrap();
    });
    assert_eq!(fv.len(), 2);
    assert_eq!(mr.len(), 2);
    for (a, b) in fv.iter().zip(&mr) {
        assert_eq!(b.leaves.len(), 1 << 10);
        let diff = a.flat.iter().zip(&b.flat).map(|(x, y)| (x.v - y.v).abs().max((x.w - y.w).abs())).fold(0.0, f64::max);
        assert!(diff < 1e-12, "t = {}: max difference {diff:e}", a.t);
    }
}

#[test]
fn errors_against_itself_vanish() {
    let cfg = short_example1(4, 1e-3);
    let snaps = collect(|obs| {
        run_fv(&cfg, 4, obs).unwrap();
    });
    let last = snaps.last().unwrap();
    let n = 1i32 << 4;
    let keys: Vec<NodeKey> = (0..n * n).map(|k| NodeKey::new(4, k % n, k / n)).collect();
    let values: Vec<CellState> = last.flat.clone();
    let e = field_errors(&keys, &values, &last.flat, 4, false).unwrap();
    assert_eq!(e.v.e1, 0.0);
    assert_eq!(e.v.e_inf, 0.0);
}

#[test]
fn adaptive_runs_are_deterministic() {
    let cfg = short_example1(5, 1e-2);
    let a = collect(|obs| {
        run_adaptive(&cfg, Method::MrLts, obs).unwrap();
    });
    let b = collect(|obs| {
        run_adaptive(&cfg, Method::MrLts, obs).unwrap();
    });
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.leaves, y.leaves);
        assert_eq!(x.flat, y.flat);
    }
}

#[test]
fn coarser_tolerance_never_needs_more_leaves_at_the_start() {
    let mut cfg = short_example1(6, 1e-4);
    cfg.t_end = 0.01;
    cfg.snapshot_times = vec![0.0];
    let leaves = |eps: f64| {
        let c = cfg.clone().with_eps(eps);
        collect(|obs| {
            run_adaptive(&c, Method::Mr, obs).unwrap();
        })[0]
            .leaves
            .len()
    };
    let counts: Vec<usize> = [1e-4, 1e-3, 1e-2, 1e-1].into_iter().map(leaves).collect();
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    assert!(counts[3] < counts[0]);
}
