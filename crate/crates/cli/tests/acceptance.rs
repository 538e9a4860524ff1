//! Acceptance gate: one line per criterion, each at its pinned tolerance and
//! runtime budget. Runs as a plain binary so the report is always printed.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use kirchhoff_core::energy::{derivative_pairing, energy_value, eps_bound_constant, residual_sup};
use kirchhoff_core::lattice::{lattice_zeta, Kernel, LatticeDomain, Potential};
use kirchhoff_core::nehari::{project_nehari, project_sign_changing, rescale_parts, FiberScalars};
use kirchhoff_core::operator::{cross_term_k, grad_norm_sq, gradient_form, ibp_defect, split_signs};
use kirchhoff_core::solver::{
    initial_bump, solve_ground_state, solve_sign_changing, verify_energy_gap, InitialGuess, SolveOptions, SolveResult,
};
use kirchhoff_core::{Field, ModelParams, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn problem_with(params: ModelParams) -> Problem {
    let dom = Arc::new(LatticeDomain::new(2, 8).unwrap());
    let kernel = Kernel::new(dom.clone(), params.s, 1.0).unwrap();
    let pot = Potential::from_family(dom, 1.0, 1.0, 1.0, &[0, 0]).unwrap();
    Problem::new(kernel, pot, params).unwrap()
}

fn default_problem() -> Problem {
    problem_with(ModelParams::default())
}

fn uniform(pr: &Problem, rng: &mut ChaCha8Rng) -> Field {
    Field::from_fn(pr.domain().clone(), |_| rng.random_range(-1.0..1.0))
}

fn away_from_zero(pr: &Problem, rng: &mut ChaCha8Rng) -> Field {
    let mut f = Field::from_fn(pr.domain().clone(), |_| {
        let m = rng.random_range(0.5..1.5);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    });
    let n = f.len();
    f.values_mut()[0] = 1.0;
    f.values_mut()[n - 1] = -1.0;
    f
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Power-law weight computed from the coordinates, independent of the kernel table.
fn weight(pr: &Problem, x: &[i64], y: &[i64]) -> f64 {
    let r: i64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    let d = pr.domain().dim() as f64;
    (r as f64).powf(-d - 2.0 * pr.params.s)
}

/// `½ Σ_x Σ_y w(x,y) (u(x) - u(y)) (v(x) - v(y))` by a direct double loop.
fn brute_pairing(pr: &Problem, u: &Field, v: &Field) -> f64 {
    let dom = pr.domain();
    let mut total = 0.0;
    for i in 0..dom.len() {
        for j in 0..dom.len() {
            if i != j {
                let w = weight(pr, dom.vertex(i), dom.vertex(j));
                total += w * (u.values()[i] - u.values()[j]) * (v.values()[i] - v.values()[j]);
            }
        }
    }
    0.5 * total
}

fn brute_k(pr: &Problem, u: &Field) -> f64 {
    let dom = pr.domain();
    let (up, um) = split_signs(u);
    let mut total = 0.0;
    for i in 0..dom.len() {
        for j in 0..dom.len() {
            if i != j {
                let w = weight(pr, dom.vertex(i), dom.vertex(j));
                total += w * (up.values()[j] * um.values()[i] + um.values()[j] * up.values()[i]);
            }
        }
    }
    total
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn algebraic_identities() -> Outcome {
    let pr = default_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut worst_ibp = 0.0f64;
    for _ in 0..100 {
        let u = uniform(&pr, &mut rng);
        let (r, t) = (rng.random_range(0.1..4.0), rng.random_range(0.1..4.0));
        let (up, um) = split_signs(&u);
        let w = rescale_parts(&u, r, t);
        let a_plus = grad_norm_sq(&pr.kernel, &up).unwrap();
        let a_minus = grad_norm_sq(&pr.kernel, &um).unwrap();
        let k = brute_k(&pr, &u);
        let closed = [
            r * r * a_plus + t * t * a_minus - r * t * k,
            r * r * a_plus - 0.5 * r * t * k,
            t * t * a_minus - 0.5 * r * t * k,
        ];
        let direct = [
            brute_pairing(&pr, &w, &w),
            brute_pairing(&pr, &w, &up.scaled(r)),
            brute_pairing(&pr, &w, &um.scaled(t)),
        ];
        for (a, b) in closed.iter().zip(&direct) {
            worst = worst.max(rel(*a, *b));
        }
        let phi = uniform(&pr, &mut rng);
        let scale =
            brute_pairing(&pr, &u, &phi).abs() + (brute_pairing(&pr, &u, &u) * brute_pairing(&pr, &phi, &phi)).sqrt();
        worst_ibp = worst_ibp.max(ibp_defect(&pr.kernel, &u, &phi).unwrap().abs() / scale);
    }
    ensure(worst <= 1e-12, || format!("mixed-scaling defect {worst:e}"))?;
    ensure(worst_ibp <= 1e-12, || {
        format!("integration-by-parts defect {worst_ibp:e}")
    })?;
    Ok(format!("max defects {worst:.2e} / {worst_ibp:.2e}"))
}

fn sign_calculus() -> Outcome {
    let pr = default_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut k_max = f64::NEG_INFINITY;
    for _ in 0..1000 {
        k_max = k_max.max(cross_term_k(&pr.kernel, &uniform(&pr, &mut rng)).unwrap());
    }
    ensure(k_max <= 0.0, || format!("K(u) = {k_max:e} > 0"))?;
    let dom = pr.domain().clone();
    let n = dom.len();
    let mut dipole = 0.0f64;
    for _ in 0..50 {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let mut u = Field::zeros(dom.clone());
        u.values_mut()[i] = 1.0;
        u.values_mut()[j] = -1.0;
        let expect = -2.0 * weight(&pr, dom.vertex(i), dom.vertex(j));
        dipole = dipole.max(rel(cross_term_k(&pr.kernel, &u).unwrap(), expect));
    }
    ensure(dipole <= 1e-14, || format!("dipole K defect {dipole:e}"))?;
    for _ in 0..100 {
        let u = uniform(&pr, &mut rng);
        let (up, um) = split_signs(&u);
        let g = gradient_form(&pr.kernel, &u, &u).unwrap();
        let gp = gradient_form(&pr.kernel, &up, &up).unwrap();
        let gm = gradient_form(&pr.kernel, &um, &um).unwrap();
        for x in 0..n {
            let (a, p, m) = (g.values()[x], gp.values()[x], gm.values()[x]);
            ensure(a >= p && a >= m, || format!("pointwise |∇u|² = {a} < max({p}, {m})"))?;
        }
    }
    Ok(format!("max K = {k_max:.3e}, dipole defect {dipole:.1e}"))
}

fn norm_comparison() -> Outcome {
    let pr = default_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let zeta = lattice_zeta(2, 0.5, 10_000).unwrap();
    let bound = 2.0 * pr.kernel.c_w() * zeta.upper();
    let mut ratio = 0.0f64;
    for _ in 0..100 {
        let u = uniform(&pr, &mut rng);
        ratio = ratio.max(grad_norm_sq(&pr.kernel, &u).unwrap() / (bound * u.norm_sq()));
    }
    ensure(ratio <= 1.0, || format!("norm ratio {ratio}"))?;
    let pi2 = std::f64::consts::PI.powi(2);
    for (d, exact) in [(1, pi2 / 3.0), (2, 2.0 * pi2 / 3.0)] {
        let z = lattice_zeta(d, 0.5, 10_000).unwrap();
        ensure(z.partial_sum <= exact && exact - z.partial_sum <= z.tail_bound, || {
            format!("d={d}: partial {} tail {} exact {exact}", z.partial_sum, z.tail_bound)
        })?;
    }
    Ok(format!("max ratio {ratio:.4}"))
}

fn gradient_correctness() -> Outcome {
    let pr = default_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (u, phi) = (away_from_zero(&pr, &mut rng), away_from_zero(&pr, &mut rng));
        let jp = energy_value(&pr, &u.combine(1.0, &phi, h).unwrap()).unwrap();
        let jm = energy_value(&pr, &u.combine(1.0, &phi, -h).unwrap()).unwrap();
        worst = worst.max(rel((jp - jm) / (2.0 * h), derivative_pairing(&pr, &u, &phi).unwrap()));
    }
    ensure(worst <= 1e-5, || format!("finite-difference defect {worst:e}"))?;
    Ok(format!("max relative defect {worst:.2e}"))
}

fn nehari_suite() -> Outcome {
    let pr = default_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut res, mut equi) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let u = away_from_zero(&pr, &mut rng);
        let proj = project_nehari(&pr, &u).map_err(|e| e.to_string())?;
        res = res.max(proj.residual.abs() / proj.scale);
        for lambda in [0.5, 2.0] {
            let pl = project_nehari(&pr, &u.scaled(lambda)).map_err(|e| e.to_string())?;
            equi = equi.max(rel(pl.t_u * lambda, proj.t_u));
        }
        let on = u.scaled(proj.t_u);
        let top = energy_value(&pr, &on).unwrap();
        for t in [0.25, 0.5, 0.9, 1.1, 2.0, 4.0] {
            let jt = energy_value(&pr, &on.scaled(t)).unwrap();
            ensure(top > jt, || format!("J(u) = {top} <= J({t}u) = {jt}"))?;
        }
        let fs = FiberScalars::of(&pr, &u).unwrap();
        let changes = fs.count_sign_changes(proj.t_u / 64.0, proj.t_u * 64.0, 256);
        ensure(changes == 1, || format!("{changes} sign changes of G"))?;
    }
    ensure(res <= 1e-10, || format!("Nehari residual {res:e}"))?;
    ensure(equi <= 1e-8, || format!("equivariance defect {equi:e}"))?;
    Ok(format!("residual {res:.1e}, equivariance {equi:.1e}"))
}

fn sign_changing_suite() -> Outcome {
    let pr = default_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (mut res, mut spread, mut bound) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let grid: Vec<f64> = (0..8).map(|k| 0.25 * 16f64.powf(k as f64 / 7.0)).collect();
    for _ in 0..20 {
        let u = away_from_zero(&pr, &mut rng);
        let proj = project_sign_changing(&pr, &u).map_err(|e| e.to_string())?;
        let (up, um) = split_signs(&u);
        let w = rescale_parts(&u, proj.r_u, proj.t_u);
        let (rp, tm) = (up.scaled(proj.r_u), um.scaled(proj.t_u));
        // re-evaluate φ on the field itself
        let phi1 = derivative_pairing(&pr, &w, &rp).unwrap();
        let phi2 = derivative_pairing(&pr, &w, &tm).unwrap();
        let h = |f: &Field| {
            grad_norm_sq(&pr.kernel, f).unwrap()
                + f.values()
                    .iter()
                    .zip(pr.potential.values())
                    .map(|(v, h)| h * v * v)
                    .sum::<f64>()
        };
        let scale = h(&rp).max(h(&tm));
        res = res.max(phi1.abs().max(phi2.abs()) / scale);
        spread = spread.max(proj.restart_spread);
        let top = energy_value(&pr, &w).unwrap();
        for &r in &grid {
            for &t in &grid {
                let e = energy_value(&pr, &rescale_parts(&w, r, t)).unwrap();
                ensure(top > e, || format!("J(w) = {top} <= J({r}w⁺ + {t}w⁻) = {e}"))?;
            }
        }
        let up_proj = project_sign_changing(&pr, &w.scaled(1.2)).map_err(|e| e.to_string())?;
        bound = bound.max(up_proj.r_u.max(up_proj.t_u));
    }
    ensure(res <= 1e-8, || format!("φ residual {res:e}"))?;
    ensure(spread <= 1e-6, || format!("restart spread {spread:e}"))?;
    ensure(bound <= 1.0 + 1e-8, || format!("up-scaled projection {bound}"))?;
    Ok(format!(
        "φ residual {res:.1e}, spread {spread:.1e}, max up-scaled scalar {bound:.6}"
    ))
}

fn ground(pr: &Problem) -> Result<SolveResult, String> {
    let init = initial_bump(
        pr.domain(),
        &InitialGuess::Positive {
            width: 2.0,
            center: vec![0, 0],
        },
    )
    .unwrap();
    solve_ground_state(pr, &init, &SolveOptions::default()).map_err(|e| e.to_string())
}

fn sign_changing(pr: &Problem) -> Result<SolveResult, String> {
    let guess = InitialGuess::Dipole {
        width: 2.0,
        plus: vec![-2, 0],
        minus: vec![2, 0],
    };
    let init = initial_bump(pr.domain(), &guess).unwrap();
    let opts = SolveOptions {
        restart_guess: Some(guess),
        ..SolveOptions::default()
    };
    solve_sign_changing(pr, &init, &opts).map_err(|e| e.to_string())
}

fn end_to_end_ground() -> Outcome {
    let pr = default_problem();
    let u = ground(&pr)?;
    ensure(u.converged, || "did not converge".into())?;
    let residual = residual_sup(&pr, &u.field).unwrap();
    let tol = 1e-6 * (1.0 + u.field.norm_inf().powf(pr.params.p - 1.0));
    ensure(residual <= tol, || format!("residual {residual:e} > {tol:e}"))?;
    ensure(u.j > 0.0 && !u.field.is_zero(), || format!("J = {}", u.j))?;
    let grid: Vec<f64> = (0..128).map(|i| 0.25 * 16f64.powf(i as f64 / 127.0)).collect();
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| energy_value(&pr, &u.field.scaled(t)).unwrap())
        .collect();
    let best = (0..grid.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    ensure(values[best] <= u.j, || {
        format!("fiber exceeds J(u) at t = {}", grid[best])
    })?;
    ensure(
        grid[best.saturating_sub(1)] <= 1.0 && 1.0 <= grid[(best + 1).min(127)],
        || format!("fiber peaks at t = {}", grid[best]),
    )?;
    Ok(format!(
        "J = {:.10}, residual {residual:.2e} <= {tol:.2e}, {} iterations",
        u.j, u.iterations
    ))
}

fn end_to_end_sign_changing() -> Outcome {
    let pr = default_problem();
    let v = sign_changing(&pr)?;
    ensure(v.converged, || "did not converge".into())?;
    ensure(v.field.has_positive() && v.field.has_negative(), || {
        "lost a sign".into()
    })?;
    let (r, t) = v.projection_scalars();
    ensure((r - 1.0).abs() <= 1e-8 && (t - 1.0).abs() <= 1e-8, || {
        format!("(r, t) = ({r}, {t})")
    })?;
    ensure(v.j > 0.0, || format!("J = {}", v.j))?;
    Ok(format!(
        "J = {:.10}, (r, t) - 1 = ({:.1e}, {:.1e}), {} iterations",
        v.j,
        r - 1.0,
        t - 1.0,
        v.iterations
    ))
}

fn energy_gap() -> Outcome {
    let mut report = Vec::new();
    for p in [7.0, 6.5, 8.0] {
        let pr = problem_with(ModelParams {
            p,
            q: f64::max(8.0, p + 1.0),
            ..ModelParams::default()
        });
        let (u, v) = (ground(&pr)?, sign_changing(&pr)?);
        let gap = verify_energy_gap(&pr, &u, &v).map_err(|e| e.to_string())?;
        ensure(gap.holds, || format!("p = {p}: J(v) - 2J(u) = {}", gap.gap))?;
        let parts = gap.j_plus + gap.j_minus;
        ensure(v.j > parts, || format!("p = {p}: J(v) = {} <= {parts}", v.j))?;
        ensure(parts >= 2.0 * u.j - 2e-6 * u.j.abs(), || {
            format!("p = {p}: parts {parts} < 2J(u) = {}", 2.0 * u.j)
        })?;
        report.push(format!("p={p}: gap {:.4}", gap.gap));
    }
    Ok(report.join(", "))
}

fn log_growth_bound() -> Outcome {
    let (eps, p, q) = (0.25, 7.0, 8.0);
    let c = eps_bound_constant(eps, p, q).map_err(|e| e.to_string())?;
    let n = 1_000_000;
    let (lo, hi) = (1e-6f64.ln(), 1e3f64.ln());
    for i in 0..n {
        let t = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
        let lhs = t.powf(p - 1.0) * (t * t).ln().abs();
        let rhs = eps * t + c * t.powf(q - 1.0);
        ensure(lhs <= rhs, || format!("t = {t}: {lhs} > {rhs}"))?;
    }
    Ok(format!("C = {c:.6e}"))
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bodies = Vec::new();
    for d in &dirs {
        let out = d.path().display().to_string();
        let code = kirchhoff_cli::run(["kirchhoff", "verify", "--seed", "7", "--out", &out]);
        ensure(code == 0, || format!("verify exited with {code}"))?;
        bodies.push(std::fs::read(d.path().join("verify.csv")).unwrap());
    }
    ensure(bodies[0] == bodies[1], || "verify.csv differs between runs".into())?;
    Ok(format!("{} identical bytes", bodies[0].len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("algebraic identities", 10, algebraic_identities),
        ("sign calculus", 10, sign_calculus),
        ("norm comparison", 30, norm_comparison),
        ("gradient correctness", 30, gradient_correctness),
        ("nehari suite", 60, nehari_suite),
        ("sign-changing suite", 120, sign_changing_suite),
        ("end-to-end ground state", 300, end_to_end_ground),
        ("end-to-end sign-changing", 600, end_to_end_sign_changing),
        ("energy gap", 1800, energy_gap),
        ("log growth bound", 10, log_growth_bound),
        ("determinism", 600, determinism),
    ];
    let mut stdout = std::io::stdout();
    let mut failures = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= Duration::from_secs(budget) {
                Ok(msg)
            } else {
                Err(format!("{msg}; runtime {elapsed:.1?} exceeds {budget} s"))
            }
        });
        let (tag, msg) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failures += 1;
                ("FAIL", m)
            }
        };
        writeln!(stdout, "{tag} {name}: {msg} [{elapsed:.2?}]").unwrap();
    }
    writeln!(
        stdout,
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    )
    .unwrap();
    if failures > 0 {
        std::process::exit(1);
    }
}
