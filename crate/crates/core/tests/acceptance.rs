//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::cell::Cell;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfmix_core::localization::{
    homogeneous_mixing_oracle, localization_forward_check, localization_search, PairKernelField,
};
use selfmix_core::scenario::{gaussian_blob, laminar_dt, laminar_model, two_stream, unit_periodic};
use selfmix_core::{
    covering_set, evolve_tag, impulse_budget, mass_mixer, overlap_measure, run, seed_portion, step,
    stable_dt, AlphaField, DtPolicy, Integrator, MixerParams, Model, PortionTag, SolverConfig, SolverState,
    StepRecord, VelocityGrid,
};

struct Check {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

// lowest min/max ratio seen in any auto-CFL run
thread_local! {
    static WORST_POSITIVITY: Cell<f64> = const { Cell::new(f64::INFINITY) };
}

fn note_positivity(field: &AlphaField) {
    let max = field.max();
    if max > 0.0 {
        let ratio = field.min() / max;
        WORST_POSITIVITY.with(|w| w.set(w.get().min(ratio)));
    }
}

fn mixer_antisymmetry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..1_000_000 {
        let ra = rng.gen_range(0.0..10.0);
        let rb = rng.gen_range(0.0..10.0);
        let dim = rng.gen_range(1..=2);
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let params = MixerParams::new(rng.gen_range(0.01..100.0), 0.0, dim).unwrap();
        let mab = mass_mixer(ra, rb, &a, &b, &params);
        let mba = mass_mixer(rb, ra, &b, &a, &params);
        worst = worst.max((mab + mba).abs() / mab.abs().max(1.0));
    }
    Check {
        id: 1,
        name: "mixer antisymmetry over 1e6 tuples",
        pass: worst <= 1e-15,
        detail: format!("max |M+M^T|/max(1,|M|) = {worst:e}"),
    }
}

fn two_stream_model(n: usize, nodes: usize) -> Model {
    let s = unit_periodic(2, n).unwrap();
    let v = VelocityGrid::build(2, 1.0, nodes).unwrap();
    Model::new(s, v, MixerParams::new(1.0, 1e-3, 2).unwrap()).unwrap()
}

fn mass_conservation() -> Check {
    let model = two_stream_model(32, 8);
    let dt = stable_dt(&model, &SolverConfig::default()).unwrap();
    let config = SolverConfig {
        t_end: 1000.0 * dt,
        ..SolverConfig::default()
    };
    let mut observer = |s: &SolverState, _: Option<&StepRecord>| {
        note_positivity(&s.field);
        Ok(())
    };
    match run(two_stream(&model, 7), &model, &config, &mut observer) {
        Ok(out) => {
            let drift = out.ledger.iter().fold(0.0_f64, |m, e| m.max(e.drift.abs()));
            Check {
                id: 2,
                name: "mass conservation, two_stream 32^2",
                pass: drift <= 1e-10 && out.state.step_count == 1000,
                detail: format!(
                    "{} nodes, {} steps, max relative drift {drift:e}",
                    model.velocity.len(),
                    out.state.step_count
                ),
            }
        }
        Err(e) => Check {
            id: 2,
            name: "mass conservation, two_stream 32^2",
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn uniform_fixed_point() -> Check {
    let s = unit_periodic(2, 8).unwrap();
    let m = 12;
    let mut nodes = Vec::new();
    for k in 0..m {
        let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        nodes.extend([0.8 * th.cos(), 0.8 * th.sin()]);
    }
    let v = VelocityGrid::from_nodes(2, nodes, vec![0.1; m], 1.0).unwrap();
    let model = Model::new(s, v, MixerParams::new(1.0, 0.01, 2).unwrap()).unwrap();
    let mut field = model.zero_field();
    field.values_mut().iter_mut().for_each(|x| *x = 0.7);
    let dt = stable_dt(&model, &SolverConfig::default()).unwrap();
    let mut state = SolverState::new(field);
    let mut worst = 0.0_f64;
    for integrator in [Integrator::Euler, Integrator::Rk2] {
        for _ in 0..100 {
            step(&mut state, &model, dt, integrator).unwrap();
            worst = worst.max(state.last_increment.iter().fold(0.0, |a, d| a.max(d.abs())));
        }
    }
    Check {
        id: 4,
        name: "uniform fixed point",
        pass: worst <= 1e-14,
        detail: format!("max per-step |drho| = {worst:e}"),
    }
}

fn homogeneous_relaxation() -> Check {
    let s = unit_periodic(1, 4).unwrap();
    let v = VelocityGrid::from_nodes(1, vec![0.5, 1.0], vec![0.5, 0.5], 1.0).unwrap();
    let model = Model::new(s, v, MixerParams::new(1.0, 0.0, 1).unwrap()).unwrap();
    let row0 = [1.0, 0.6];
    let oracle = homogeneous_mixing_oracle(&row0, &model.velocity, &model.params, 1.0).unwrap();
    let mut errors = Vec::new();
    for integrator in [Integrator::Euler, Integrator::Rk2] {
        let mut field = model.zero_field();
        for c in 0..4 {
            field.row_mut(c).copy_from_slice(&row0);
        }
        let config = SolverConfig {
            dt_policy: DtPolicy::Fixed(1e-3),
            t_end: 1.0,
            integrator,
            ..SolverConfig::default()
        };
        let out = run(field, &model, &config, &mut |_: &SolverState, _: Option<&StepRecord>| Ok(())).unwrap();
        let mut err = 0.0_f64;
        for c in 0..4 {
            for j in 0..2 {
                err = err.max((out.state.field.get(c, j) - oracle[j]).abs() / oracle[j].abs());
            }
        }
        errors.push(err);
    }
    Check {
        id: 5,
        name: "homogeneous relaxation vs oracle",
        pass: errors[0] <= 1e-3 && errors[1] <= 1e-5,
        detail: format!("euler {:e} (<= 1e-3), rk2 {:e} (<= 1e-5)", errors[0], errors[1]),
    }
}

fn transport_error(n: usize) -> f64 {
    let s = unit_periodic(1, n).unwrap();
    let v = VelocityGrid::from_nodes(1, vec![1.0], vec![1.0], 1.0).unwrap().with_kappa(0.0).unwrap();
    let model = Model::new(s, v, MixerParams::new(1.0, 0.0, 1).unwrap()).unwrap();
    let initial = gaussian_blob(&model, 0.1);
    let config = SolverConfig {
        dt_policy: DtPolicy::Fixed(0.5 / n as f64),
        t_end: 1.0,
        ..SolverConfig::default()
    };
    let out = run(initial.clone(), &model, &config, &mut |_: &SolverState, _: Option<&StepRecord>| Ok(())).unwrap();
    let h = model.spatial.h();
    out.state
        .field
        .values()
        .iter()
        .zip(initial.values())
        .map(|(a, b)| (a - b).abs() * h)
        .sum()
}

fn transport_order() -> Check {
    let errs: Vec<f64> = [128, 256, 512].into_iter().map(transport_error).collect();
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    Check {
        id: 6,
        name: "first-order transport convergence",
        pass: ratios.iter().all(|r| (1.7..=2.3).contains(r)),
        detail: format!(
            "L1 errors {:.3e} {:.3e} {:.3e}, ratios {:.3} {:.3}",
            errs[0], errs[1], errs[2], ratios[0], ratios[1]
        ),
    }
}

fn localization() -> Check {
    let s = unit_periodic(2, 8).unwrap();
    let v = VelocityGrid::build(2, 1.0, 4).unwrap();
    let model = Model::new(s.clone(), v.clone(), MixerParams::new(1.0, 0.0, 2).unwrap()).unwrap();
    let mut forward = 0.0_f64;
    let mut failure = None;
    let mut kernels = vec![PairKernelField::random_antisymmetric(s.n_cells(), &v, 11)];
    kernels.push(PairKernelField::from_mass_mixer(&two_stream(&model, 2), &v, &model.params));
    for k in &kernels {
        match localization_forward_check(k, &s, &v, 100, 5) {
            Ok(r) => forward = forward.max(r.max_relative),
            Err(e) => failure = Some(e.to_string()),
        }
    }
    let mut defect = PairKernelField::random_antisymmetric(s.n_cells(), &v, 12);
    defect.add_symmetric_defect(1.0);
    defect.balance_d(&v);
    let broken = localization_search(&defect, &s, &v, 100, 6).unwrap().max_relative;
    Check {
        id: 7,
        name: "localization forward check and defect detection",
        pass: failure.is_none() && forward <= 1e-12 && broken >= 0.1,
        detail: match failure {
            Some(e) => e,
            None => format!("forward max relative {forward:e}, defect max relative {broken:.3}"),
        },
    }
}

fn impulse_budget_identity() -> Check {
    let model = two_stream_model(16, 6);
    let dt = stable_dt(&model, &SolverConfig::default()).unwrap();
    let mut worst = 0.0_f64;
    for integrator in [Integrator::Euler, Integrator::Rk2] {
        let mut state = SolverState::new(two_stream(&model, 4));
        for _ in 0..100 {
            let before = state.field.clone();
            let rec = step(&mut state, &model, dt, integrator).unwrap();
            note_positivity(&state.field);
            let b = impulse_budget(&before, &state.field, &rec, &model).unwrap();
            worst = worst.max(b.relative);
        }
    }
    Check {
        id: 8,
        name: "impulse budget identity",
        pass: worst <= 1e-10,
        detail: format!("max relative residual {worst:e}"),
    }
}

struct PortionRun {
    first_overlap: Option<f64>,
    any_overlap: bool,
    domination: f64,
    tag_drift: f64,
}

fn track_portions(model: &Model, initial: AlphaField, dt: f64, steps: usize) -> PortionRun {
    let n = model.spatial.cells_per_axis()[0];
    let s = &model.spatial;
    let a = move |c: usize| {
        let x = c % n;
        let y = c / n;
        x < n / 4 && (n / 4..n / 2).contains(&y)
    };
    let b = move |c: usize| {
        let x = c % n;
        let y = c / n;
        (n / 2..3 * n / 4).contains(&x) && (n / 4..n / 2).contains(&y)
    };
    let mut tags: Vec<PortionTag> = vec![
        seed_portion(&initial, a, None).unwrap(),
        seed_portion(&initial, b, None).unwrap(),
    ];
    let mass0: Vec<f64> = tags.iter().map(|t| t.mass(s, &model.velocity)).collect();
    let mut state = SolverState::new(initial);
    let mut out = PortionRun {
        first_overlap: None,
        any_overlap: false,
        domination: 0.0,
        tag_drift: 0.0,
    };
    for _ in 0..steps {
        let rec = step(&mut state, model, dt, Integrator::Euler).unwrap();
        note_positivity(&state.field);
        let max = state.field.max();
        for (t, m0) in tags.iter_mut().zip(&mass0) {
            *t = evolve_tag(t, &rec, model).unwrap();
            let (over, neg) = t.domination_violation(&state.field);
            out.domination = out.domination.max(over.max(neg) / max);
            out.tag_drift = out.tag_drift.max((t.mass(s, &model.velocity) - m0).abs() / m0);
        }
        let sa = covering_set(&tags[0], &model.velocity, 1e-6);
        let sb = covering_set(&tags[1], &model.velocity, 1e-6);
        if overlap_measure(&sa, &sb, s) > 0.0 {
            out.any_overlap = true;
            out.first_overlap.get_or_insert(state.t);
        }
    }
    out
}

fn portions_runs() -> (PortionRun, PortionRun) {
    let model = two_stream_model(16, 6);
    let dt = stable_dt(&model, &SolverConfig::default()).unwrap();
    let steps = (1.0 / dt).ceil() as usize;
    let mixing = track_portions(&model, two_stream(&model, 9), dt, steps);

    let lam = laminar_model(unit_periodic(2, 16).unwrap(), 0.5).unwrap();
    let mut blob = lam.zero_field();
    blob.values_mut().iter_mut().for_each(|x| *x = 1.0);
    let dt = laminar_dt(&lam);
    let steps = (1.0 / dt).round() as usize;
    let laminar = track_portions(&lam, blob, dt, steps);
    (mixing, laminar)
}

fn non_invertibility(mixing: &PortionRun, laminar: &PortionRun) -> Check {
    Check {
        id: 9,
        name: "disjoint portions overlap under mixing, never in the laminar limit",
        pass: mixing.any_overlap && !laminar.any_overlap,
        detail: format!(
            "two_stream first overlap at t = {:?}; laminar overlap seen: {}",
            mixing.first_overlap, laminar.any_overlap
        ),
    }
}

fn tag_domination(runs: &[&PortionRun]) -> Check {
    let dom = runs.iter().fold(0.0_f64, |m, r| m.max(r.domination));
    let drift = runs.iter().fold(0.0_f64, |m, r| m.max(r.tag_drift));
    Check {
        id: 10,
        name: "tag domination and tagged-mass conservation",
        pass: dom <= 1e-12 && drift <= 1e-10,
        detail: format!("max violation / max rho {dom:e}, max tag drift {drift:e}"),
    }
}

fn positivity() -> Check {
    let worst = WORST_POSITIVITY.with(|w| w.get());
    Check {
        id: 3,
        name: "positivity under auto CFL",
        pass: worst >= -1e-15,
        detail: format!("min rho / max rho over all auto-CFL runs = {worst:e}"),
    }
}

fn main() -> ExitCode {
    let mut checks = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> Vec<Check>| {
        let start = Instant::now();
        let mut out = f();
        let secs = start.elapsed().as_secs_f64();
        for c in &mut out {
            c.detail = format!("{} [{secs:.2} s]", c.detail);
        }
        checks.extend(out);
    };
    timed(&mut || vec![mixer_antisymmetry()]);
    timed(&mut || vec![mass_conservation()]);
    timed(&mut || vec![uniform_fixed_point()]);
    timed(&mut || vec![homogeneous_relaxation()]);
    timed(&mut || vec![transport_order()]);
    timed(&mut || vec![localization()]);
    timed(&mut || vec![impulse_budget_identity()]);
    timed(&mut || {
        let (mixing, laminar) = portions_runs();
        vec![non_invertibility(&mixing, &laminar), tag_domination(&[&mixing, &laminar])]
    });
    checks.push(positivity());
    checks.sort_by_key(|c| c.id);

    let mut failed = 0;
    for c in &checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {}: {}", c.id, c.name, c.detail);
        failed += usize::from(!c.pass);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
