//! Brute-force oracles behind the `validate` command. Each check compares a
//! production routine against a slow, independent recomputation.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::agent::gae::gae;
use crate::agent::policy::{entropy_grad, logprob_grad, policy_entropy, policy_logprob, HybridAction, PolicyNet};
use crate::agent::ppo::clipped_surrogate;
use crate::agent::Mlp;
use crate::geometry::{segment_intersects_building, Building, Vec3};
use crate::radio::{
    element_gain, path_loss_los, path_loss_nlos, AnglePair, GbsClass, RadioConfig, LOW_BRACKET_TOP,
    MACRO_NLOS_MAX_ALTITUDE,
};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

fn timed(name: &str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = f();
    CheckResult { name: name.into(), passed, detail, elapsed_ms: t.elapsed().as_millis() }
}

/// True if any point sampled every `spacing` meters along the open segment
/// lies strictly inside a building.
pub fn sampled_segment_blocked(p0: Vec3, p1: Vec3, buildings: &[Building], spacing: f64) -> bool {
    let len = (p1 - p0).norm();
    let n = (len / spacing).ceil().max(1.0) as usize;
    (1..n).any(|i| {
        let p = p0 + (p1 - p0) * (i as f64 / n as f64);
        buildings.iter().any(|b| b.contains(p))
    })
}

pub fn random_buildings(rng: &mut SimRng, extent: f64, count: usize) -> Vec<Building> {
    (0..count)
        .map(|_| {
            let w = rng.gen_range(5.0..40.0);
            let d = rng.gen_range(5.0..40.0);
            let x = rng.gen_range(0.0..extent - w);
            let y = rng.gen_range(0.0..extent - d);
            Building::new(x, y, x + w, y + d, rng.gen_range(5.0..60.0))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LosReport {
    pub segments: usize,
    pub blocked: usize,
    pub disagreements: usize,
    /// 1 cm disagreements that vanish when re-sampled at 0.1 mm: the segment
    /// grazes a box for less than the sampling step.
    pub below_resolution: usize,
}

/// Raycast blocking versus 1 cm point sampling on random segments.
pub fn los_oracle(n_scenarios: usize, segments_per: usize, seed: u64) -> LosReport {
    let extent = 200.0;
    let mut report = LosReport { segments: 0, blocked: 0, disagreements: 0, below_resolution: 0 };
    for s in 0..n_scenarios {
        let mut rng = rng_from_seed(derive_seed(seed, 1, s as u64));
        let n_b = rng.gen_range(3..12);
        let buildings = random_buildings(&mut rng, extent, n_b);
        for _ in 0..segments_per {
            let mut pt = || Vec3::new(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent), rng.gen_range(0.0..70.0));
            let (a, b) = (pt(), pt());
            let fast = buildings.iter().any(|bb| segment_intersects_building(a, b, bb));
            let slow = sampled_segment_blocked(a, b, &buildings, 0.01);
            report.segments += 1;
            report.blocked += slow as usize;
            if fast != slow {
                if fast == sampled_segment_blocked(a, b, &buildings, 1e-4) {
                    report.below_resolution += 1;
                } else {
                    report.disagreements += 1;
                }
            }
        }
    }
    report
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn random_sizes(rng: &mut SimRng) -> Vec<usize> {
    let depth = rng.gen_range(1..4);
    let mut s = vec![rng.gen_range(1..7)];
    for _ in 0..depth {
        s.push(rng.gen_range(1..7));
    }
    s
}

fn random_mlp(rng: &mut SimRng, sizes: &[usize]) -> Mlp {
    let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    Mlp::from_params(sizes, (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect()).expect("sizes are valid")
}

/// Largest relative error between analytic and central-difference
/// gradients over `n_nets` random networks: plain MLPs, value-style squared
/// losses, and policy log-probability plus entropy including `log_std`.
pub fn gradient_oracle(n_nets: usize, seed: u64) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for k in 0..n_nets {
        let mut rng = rng_from_seed(derive_seed(seed, 2, k as u64));
        match k % 3 {
            0 => {
                let sizes = random_sizes(&mut rng);
                let mut net = random_mlp(&mut rng, &sizes);
                let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let loss = |n: &Mlp| n.forward(&x).unwrap().iter().zip(&w).map(|(o, w)| o * w).sum::<f64>();
                let g = net.gradient(&x, &w).unwrap();
                for i in 0..g.len() {
                    let v = net.params()[i];
                    net.params_mut()[i] = v + h;
                    let up = loss(&net);
                    net.params_mut()[i] = v - h;
                    let dn = loss(&net);
                    net.params_mut()[i] = v;
                    worst = worst.max(rel_err(g[i], (up - dn) / (2.0 * h)));
                }
            }
            1 => {
                let mut sizes = random_sizes(&mut rng);
                *sizes.last_mut().unwrap() = 1;
                let mut net = random_mlp(&mut rng, &sizes);
                let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let target = rng.gen_range(-2.0..2.0);
                let loss = |n: &Mlp| (n.forward(&x).unwrap()[0] - target).powi(2);
                let v0 = net.forward(&x).unwrap()[0];
                let g = net.gradient(&x, &[2.0 * (v0 - target)]).unwrap();
                for i in 0..g.len() {
                    let v = net.params()[i];
                    net.params_mut()[i] = v + h;
                    let up = loss(&net);
                    net.params_mut()[i] = v - h;
                    let dn = loss(&net);
                    net.params_mut()[i] = v;
                    worst = worst.max(rel_err(g[i], (up - dn) / (2.0 * h)));
                }
            }
            _ => {
                let obs = rng.gen_range(1..6);
                let n_gbs = rng.gen_range(1..5);
                let hybrid = rng.gen_bool(0.5);
                let hidden = [rng.gen_range(1..6)];
                let mut pol = PolicyNet::new(obs, &hidden, n_gbs, hybrid, &mut rng).unwrap();
                let n = pol.mlp.n_params();
                for p in pol.mlp.params_mut() {
                    *p = rng.gen_range(-0.8..0.8);
                }
                for ls in pol.log_std.iter_mut() {
                    *ls = rng.gen_range(-1.0..0.5);
                }
                let x: Vec<f64> = (0..obs).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let action = HybridAction {
                    delta: [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)],
                    gbs: hybrid.then(|| rng.gen_range(0..n_gbs)),
                };
                let c = 0.3;
                let loss = |p: &PolicyNet| {
                    let o = p.output(&x).unwrap();
                    policy_logprob(&o, &action) + c * policy_entropy(&o)
                };
                let (out, cache) = pol.output_cached(&x).unwrap();
                let mut og = logprob_grad(&out, &action);
                og.add_scaled(&entropy_grad(&out), c);
                let mut g = vec![0.0; n];
                let mut gl = [0.0; 3];
                pol.backprop(&cache, &og, &mut g, &mut gl).unwrap();
                for i in 0..n {
                    let v = pol.mlp.params()[i];
                    pol.mlp.params_mut()[i] = v + h;
                    let up = loss(&pol);
                    pol.mlp.params_mut()[i] = v - h;
                    let dn = loss(&pol);
                    pol.mlp.params_mut()[i] = v;
                    worst = worst.max(rel_err(g[i], (up - dn) / (2.0 * h)));
                }
                for i in 0..3 {
                    let v = pol.log_std[i];
                    pol.log_std[i] = v + h;
                    let up = loss(&pol);
                    pol.log_std[i] = v - h;
                    let dn = loss(&pol);
                    pol.log_std[i] = v;
                    worst = worst.max(rel_err(gl[i], (up - dn) / (2.0 * h)));
                }
            }
        }
    }
    worst
}

/// Advantages with lambda = 1 computed as discounted Monte-Carlo returns
/// (truncated at `done`, bootstrapped at the end) minus values.
pub fn monte_carlo_advantages(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut g = 0.0;
            let mut disc = 1.0;
            let mut ended = false;
            for k in t..n {
                g += disc * rewards[k];
                disc *= gamma;
                if dones[k] {
                    ended = true;
                    break;
                }
            }
            if !ended {
                g += disc * bootstrap;
            }
            g - values[t]
        })
        .collect()
}

/// Largest absolute gap between GAE(lambda = 1) and the Monte-Carlo oracle.
pub fn gae_oracle(n_traj: usize, seed: u64) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..n_traj {
        let mut rng = rng_from_seed(derive_seed(seed, 3, k as u64));
        let n = 20;
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.15)).collect();
        let gamma = rng.gen_range(0.5..1.0);
        let boot = rng.gen_range(-5.0..5.0);
        let (a, _) = gae(&r, &v, &d, gamma, 1.0, boot);
        let mc = monte_carlo_advantages(&r, &v, &d, gamma, boot);
        for (x, y) in a.iter().zip(&mc) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Clipped objective against an explicit case split on random triples.
pub fn clip_oracle(n: usize, seed: u64) -> usize {
    let mut rng = rng_from_seed(derive_seed(seed, 4, 0));
    let mut mismatches = 0;
    for _ in 0..n {
        let rho = rng.gen_range(0.0..3.0);
        let adv = rng.gen_range(-5.0..5.0);
        let eps = rng.gen_range(0.05..0.5);
        let clipped = if rho < 1.0 - eps {
            1.0 - eps
        } else if rho > 1.0 + eps {
            1.0 + eps
        } else {
            rho
        };
        let a = rho * adv;
        let b = clipped * adv;
        let want = if a < b { a } else { b };
        if (clipped_surrogate(rho, adv, eps) - want).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    mismatches
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GuardReport {
    pub samples: usize,
    pub guard_violations: usize,
    pub monotonicity_violations: usize,
    pub element_gain_violations: usize,
}

/// Random sampling of the path-loss guards, LoS monotonicity in distance and
/// element-gain bounds.
pub fn radio_guard_oracle(n: usize, seed: u64) -> GuardReport {
    let cfg = RadioConfig::default();
    let mut rng = rng_from_seed(derive_seed(seed, 5, 0));
    let mut rep = GuardReport { samples: n, ..Default::default() };
    let lo = cfg.ge_max_dbi - cfg.a_m_db;
    for _ in 0..n {
        let class = if rng.gen_bool(0.5) { GbsClass::Micro } else { GbsClass::Macro };
        let d = rng.gen_range(1.0..3000.0);
        let z = rng.gen_range(1.5..=300.0);
        let guarded = class == GbsClass::Micro || z <= LOW_BRACKET_TOP;
        let los = path_loss_los(class, d, z, cfg.fc_ghz).unwrap();
        let nlos = path_loss_nlos(class, d, z, cfg.fc_ghz).unwrap();
        if guarded && nlos.db < los {
            rep.guard_violations += 1;
        }
        let d2 = d * rng.gen_range(1.001..2.0);
        if path_loss_los(class, d2, z, cfg.fc_ghz).unwrap() <= los {
            rep.monotonicity_violations += 1;
        }
        if !(class == GbsClass::Macro && z > LOW_BRACKET_TOP) || z <= MACRO_NLOS_MAX_ALTITUDE {
            let n2 = path_loss_nlos(class, d2, z, cfg.fc_ghz).unwrap();
            if n2.db < nlos.db {
                rep.monotonicity_violations += 1;
            }
        }
        let g = element_gain(AnglePair::new(rng.gen_range(0.0..=180.0), rng.gen_range(-180.0..=180.0)), &cfg);
        if !(lo - 1e-12..=cfg.ge_max_dbi + 1e-12).contains(&g) {
            rep.element_gain_violations += 1;
        }
    }
    rep
}

/// Runs every oracle at desk scale.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        timed("los_raycast_vs_1cm_sampling", || {
            let r = los_oracle(20, 500, seed);
            (
                r.disagreements == 0,
                format!(
                    "{} segments, {} blocked, {} disagreements, {} below 1 cm resolution",
                    r.segments, r.blocked, r.disagreements, r.below_resolution
                ),
            )
        }),
        timed("backprop_vs_finite_differences", || {
            let e = gradient_oracle(100, seed);
            (e <= 1e-4, format!("max relative error {e:.3e}"))
        }),
        timed("gae_lambda1_vs_monte_carlo", || {
            let e = gae_oracle(100, seed);
            (e <= 1e-10, format!("max abs error {e:.3e}"))
        }),
        timed("clipped_surrogate_case_split", || {
            let m = clip_oracle(10_000, seed);
            (m == 0, format!("{m} mismatches in 10000 triples"))
        }),
        timed("radio_guards_and_bounds", || {
            let r = radio_guard_oracle(100_000, seed);
            let ok = r.guard_violations + r.monotonicity_violations + r.element_gain_violations == 0;
            (ok, format!("{r:?}"))
        }),
    ]
}
