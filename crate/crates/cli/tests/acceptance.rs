//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 2 to 4 run source studies up to level 6 and take the
//! bulk of the time (roughly a minute per study on one core).

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use gradfem::{ExperimentConfig, GradingChoice, Mode};
use gradfem_core::analysis::{
    condition_study, cutoff_power, eig_rate_study, embedding_bounds_check, interpolation_study, log_log_slope,
    rate_study, rate_study_observed, scaling_identity_check, NormRules, RateTable, StudyConfig, WeightedNormParams,
};
use gradfem_core::assembly::{assemble_mass, assemble_stiffness};
use gradfem_core::fespace::FeSpace;
use gradfem_core::geometry::{from_barycentric, ORIGIN};
use gradfem_core::mesh::Mesh;
use gradfem_core::quadrature::QuadRule;
use gradfem_core::refine::{refine_mesh_k, similarity_class_census_where, GradingParams};
use gradfem_core::Point3;

/// Source rates from the published tables at j = 4 and j = 5, for
/// k = 0.1, 0.2, 0.3, 0.4, 0.5.
const TABLE_DELTA_4: [[f64; 5]; 2] = [[0.78, 0.81, 0.86, 0.88, 0.85], [0.91, 0.92, 0.94, 0.95, 0.93]];
const TABLE_DELTA_NEG: [f64; 5] = [0.67, 0.64, 0.53, 0.40, 0.26];
const RATIOS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn config(mode: Mode, delta: f64, shift: f64, k: f64, levels: u32) -> StudyConfig {
    let cfg = ExperimentConfig { mode, delta, shift, k: GradingChoice::Ratio(k), levels, ..Default::default() };
    cfg.study().expect("valid acceptance configuration")
}

/// Source studies keyed by (δ, L, k), computed once.
#[derive(Default)]
struct Cache {
    tables: BTreeMap<(i64, i64, i64), RateTable>,
}

impl Cache {
    fn source(&mut self, delta: f64, shift: f64, k: f64, levels: u32) -> Result<&RateTable, String> {
        let key = ((delta * 1e6) as i64, (shift * 1e6) as i64, (k * 1e6) as i64);
        if let Entry::Vacant(slot) = self.tables.entry(key) {
            let start = Instant::now();
            let t = rate_study(&config(Mode::Source, delta, shift, k, levels)).map_err(|e| e.to_string())?;
            println!("  source δ={delta} L={shift} k={k} to level {levels}: {:.0} s", start.elapsed().as_secs_f64());
            slot.insert(t);
        }
        Ok(&self.tables[&key])
    }

    fn rate(&mut self, delta: f64, shift: f64, k: f64, j: u32) -> Result<f64, String> {
        self.source(delta, shift, k, 6)?.rate(j).ok_or_else(|| format!("no rate at j = {j} for k = {k}"))
    }
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}

fn constant_solution() -> Result<Verdict, String> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for k in [0.1, 0.2, 0.3, 0.5] {
        let cfg = config(Mode::Source, 0.0, 1.0, k, 3);
        rate_study_observed(&cfg, |view| {
            if let (3, Some(x)) = (view.level, view.solution) {
                worst = x.iter().fold(worst, |m, c| m.max((c - 1.0).abs()));
            }
        })
        .map_err(|e| e.to_string())?;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(worst <= 1e-8 && secs < 10.0, format!("max |c - 1| = {worst:.1e}, {secs:.1} s for four ratios")))
}

fn table_delta_4(cache: &mut Cache) -> Result<Verdict, String> {
    let mut pass = true;
    let mut notes = Vec::new();
    for (col, k) in [(1, 0.2), (2, 0.3), (4, 0.5)] {
        let rates: Vec<f64> = (2..=5).map(|j| cache.rate(4.0, 0.0, k, j)).collect::<Result<_, _>>()?;
        let close = (rates[2] - TABLE_DELTA_4[0][col]).abs() <= 0.10 && (rates[3] - TABLE_DELTA_4[1][col]).abs() <= 0.10;
        let monotone = rates[1..].windows(2).all(|w| w[1] > w[0]);
        pass &= close && monotone;
        notes.push(format!(
            "k={k}: e2..e5 {} (published e4 {:.2} e5 {:.2})",
            fmt(&rates),
            TABLE_DELTA_4[0][col],
            TABLE_DELTA_4[1][col]
        ));
    }
    Ok(verdict(pass, notes.join("; ")))
}

fn table_delta_06(cache: &mut Cache) -> Result<Verdict, String> {
    let e: Vec<f64> = RATIOS.iter().map(|&k| cache.rate(0.6, 0.0, k, 5)).collect::<Result<_, _>>()?;
    let gap = e[3] - e[4];
    let low = e[..3].iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(verdict(
        gap >= 0.10 && low >= 0.85,
        format!("e5 for k=0.1..0.5: {} (gap {gap:.2}, min over k<=0.3 {low:.2})", fmt(&e)),
    ))
}

fn table_delta_neg(cache: &mut Cache) -> Result<Verdict, String> {
    let e: Vec<f64> = RATIOS.iter().map(|&k| cache.rate(-0.1, 20.0, k, 5)).collect::<Result<_, _>>()?;
    let ordered = e.windows(2).all(|w| w[0] > w[1]);
    let spread = e[0] - e[4];
    let close = e.iter().zip(TABLE_DELTA_NEG).all(|(x, p)| (x - p).abs() <= 0.12);
    Ok(verdict(
        ordered && spread >= 0.25 && close,
        format!("e5 for k=0.1..0.5: {} (published {}, spread {spread:.2})", fmt(&e), fmt(&TABLE_DELTA_NEG)),
    ))
}

fn interpolation() -> Result<Verdict, String> {
    // The cutoff falls from 1 to 0 in a thin shell below r = 1/2, which
    // meshes coarser than level 5 do not resolve; level 7 is needed to see
    // the asymptotic rate (about 3.6 GB and two minutes).
    let cfg = config(Mode::Interp, 4.0, 0.0, 0.2, 7);
    let t = interpolation_study(&cfg, cutoff_power(0.3, ExperimentConfig::default().r_c))
        .map_err(|e| e.to_string())?;
    let rates: Vec<f64> = (2..=7).filter_map(|j| t.rate(j)).collect();
    let last = *rates.last().ok_or("no rates")?;
    let trend = rates[rates.len().saturating_sub(3)..].windows(2).all(|w| w[1] > w[0]) && last <= 1.1;
    Ok(verdict(trend && last >= 0.8, format!("rates j=2..7: {}", fmt(&rates))))
}

fn eigen_doubling(cache: &mut Cache) -> Result<Verdict, String> {
    let eig = eig_rate_study(&config(Mode::Eigen, 4.0, 0.0, 0.3, 5)).map_err(|e| e.to_string())?;
    let mut pass = true;
    let mut notes = Vec::new();
    // Matching levels are those where both rates exist, j >= 3; j = 2 is
    // pre-asymptotic in every table.
    for j in 3..=4 {
        let er = eig.rate(j).ok_or("missing eigen rate")?;
        let sr = cache.rate(4.0, 0.0, 0.3, j)?;
        pass &= (er - 2.0 * sr).abs() <= 0.3;
        notes.push(format!("j={j}: eig {er:.2} vs 2x source {:.2}", 2.0 * sr));
    }
    let (dims, errs): (Vec<f64>, Vec<f64>) =
        eig.rows.iter().filter(|r| r.level >= 2).filter_map(|r| Some((r.dim as f64, r.error?))).unzip();
    let slope = log_log_slope(&dims, &errs).ok_or("slope fit failed")?;
    pass &= slope <= -0.6;
    notes.push(format!("|λ error| vs dim slope {slope:.2}"));
    Ok(verdict(pass, notes.join("; ")))
}

fn condition_growth() -> Result<Verdict, String> {
    let mut pass = true;
    let mut notes = Vec::new();
    for k in [0.2, 0.5] {
        let t = condition_study(&config(Mode::Condition, 4.0, 0.0, k, 5)).map_err(|e| e.to_string())?;
        let rows: Vec<_> = t.rows.iter().filter(|r| r.level >= 2).collect();
        let kappa: Vec<f64> = rows.iter().map(|r| r.kappa.unwrap_or(f64::NAN)).collect();
        let dims: Vec<f64> = rows.iter().map(|r| r.dim as f64).collect();
        let ratios: Vec<f64> = kappa.windows(2).map(|w| w[1] / w[0]).collect();
        let slope = log_log_slope(&dims, &kappa).ok_or("slope fit failed")?;
        pass &= ratios.iter().all(|r| (3.0..=5.5).contains(r)) && slope <= 0.75;
        notes.push(format!("k={k}: κ ratios {} slope {slope:.2}", fmt(&ratios)));
    }
    Ok(verdict(pass, notes.join("; ")))
}

fn structural() -> Result<Verdict, String> {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let refine = |k: f64, singular: &[Point3], levels: u32| -> Result<Mesh, String> {
        let g = GradingParams::new(k).map_err(|e| e.to_string())?;
        let mut m = Mesh::cube(singular).map_err(|e| e.to_string())?;
        for _ in 0..levels {
            m = refine_mesh_k(&m, &g).map_err(|e| e.to_string())?;
        }
        Ok(m)
    };

    for k in [0.1, 0.2, 0.3, 0.5] {
        let m = refine(k, &[ORIGIN], 3)?;
        check((m.total_volume() - 8.0).abs() <= 1e-12 * 8.0, "volume partition");
        check(m.check_conformity().is_ok(), "conformity");
        check(m.check_periodic_congruence().is_ok(), "periodic congruence");
    }

    let graded = refine(0.2, &[ORIGIN], 2)?;
    let worst_singular = (0..12)
        .map(|root| similarity_class_census_where(&graded, |t| t.root == root).len())
        .max()
        .unwrap_or(0);
    check(worst_singular <= 22, "similarity classes per singular root");
    let uniform = refine(0.5, &[], 3)?;
    let worst_regular =
        (0..12).map(|root| similarity_class_census_where(&uniform, |t| t.root == root).len()).max().unwrap_or(0);
    check(worst_regular <= 3, "similarity classes per regular root");

    // ∫ x^a y^b z^c over the unit simplex is a! b! c! / (a+b+c+3)!.
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let corners = [ORIGIN, Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.0, 1.0)];
    for rule in [QuadRule::four_point(), QuadRule::conical(6), QuadRule::graded_collapsed(6, 18, 8)] {
        let deg = rule.exactness_degree;
        for (a, b, c) in (0..=deg).flat_map(|a| (0..=deg - a).flat_map(move |b| (0..=deg - a - b).map(move |c| (a, b, c))))
        {
            let got: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(y, w)| {
                    let x = from_barycentric(&corners, y);
                    w / 6.0 * x.x.powi(a as i32) * x.y.powi(b as i32) * x.z.powi(c as i32)
                })
                .sum();
            let exact = fact(a) * fact(b) * fact(c) / fact(a + b + c + 3);
            check((got - exact).abs() <= 1e-12 * exact.max(1e-3), "quadrature exactness");
        }
    }

    let space = FeSpace::new(refine(0.2, &[ORIGIN], 3)?).map_err(|e| e.to_string())?;
    let mass = assemble_mass(&space).map_err(|e| e.to_string())?;
    check((mass.values().iter().sum::<f64>() - 8.0).abs() <= 1e-12, "mass total");
    let stiff = assemble_stiffness(&space).map_err(|e| e.to_string())?;
    let worst_row = (0..stiff.dim()).map(|i| stiff.row(i).map(|(_, v)| v).sum::<f64>().abs()).fold(0.0, f64::max);
    check(worst_row <= 1e-10 * stiff.max_abs(), "stiffness row sums");

    let rules = NormRules::default();
    let patch = {
        let g = GradingParams::new(0.2).map_err(|e| e.to_string())?;
        refine_mesh_k(&Mesh::cube_with_half_side(0.5, &[ORIGIN]).map_err(|e| e.to_string())?, &g)
            .map_err(|e| e.to_string())?
    };
    let bump = |x: &Point3| {
        let s = 1.0 - x.norm_squared() / 0.16;
        if s <= 0.0 {
            return (0.0, Point3::default());
        }
        let lin = 1.0 + 0.5 * x.x - 0.25 * x.z;
        let grad = *x * (-4.0 * s / 0.16 * lin) + Point3::new(0.5, 0.0, -0.25) * (s * s);
        (s * s * lin, grad)
    };
    for a in [0.0, 1.0] {
        for gamma in [0.2, 0.04] {
            let params = WeightedNormParams::new(1, a).map_err(|e| e.to_string())?;
            let c = scaling_identity_check(&patch, gamma, &params, &rules, bump).map_err(|e| e.to_string())?;
            check(c.relative_gap() <= 1e-6, "scaling identity");
        }
    }

    // Bumps centred at random points near the singular point, supported
    // within ρ < 1/2.
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..8 {
        let c = Point3::new(next() - 0.5, next() - 0.5, next() - 0.5) * 0.2;
        let radius = 0.1 + 0.1 * next();
        let v = space.modified_interpolant(|x| (1.0 - (x - c).norm_squared() / (radius * radius)).max(0.0).powi(2))
            .map_err(|e| e.to_string())?;
        let strong = WeightedNormParams::new(1, 1.0).map_err(|e| e.to_string())?;
        let weak = WeightedNormParams::new(1, 0.25 * (next() * 4.0).floor()).map_err(|e| e.to_string())?;
        let e = embedding_bounds_check(&v, &strong, &weak, 0.5, &rules).map_err(|e| e.to_string())?;
        check(e.holds, "embedding inequality");
    }

    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, "runtime under 60 s");
    failures.dedup();
    let detail = if failures.is_empty() { format!("all checks hold, {secs:.1} s") } else { failures.join(", ") };
    Ok(verdict(failures.is_empty(), detail))
}

fn laplacian_spectrum() -> Result<Verdict, String> {
    let cfg = ExperimentConfig {
        mode: Mode::Eigen,
        delta: 0.0,
        k: GradingChoice::Ratio(0.5),
        levels: 5,
        deflate: true,
        ..Default::default()
    };
    let t = eig_rate_study(&cfg.study().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let pi2 = std::f64::consts::PI.powi(2);
    let rows: Vec<_> = t.rows.iter().filter(|r| r.level >= 2).collect();
    let lambda: Vec<f64> = rows.iter().map(|r| r.eigenvalue.unwrap_or(f64::NAN)).collect();
    let dims: Vec<f64> = rows.iter().map(|r| r.dim as f64).collect();
    let errors: Vec<f64> = lambda.iter().map(|l| (l - pi2).abs()).collect();
    let decreasing = lambda.windows(2).all(|w| w[1] < w[0]) && lambda.iter().all(|&l| l > pi2);
    let slope = log_log_slope(&dims, &errors).ok_or("slope fit failed")?;
    let last = errors.last().copied().unwrap_or(f64::NAN) / pi2;
    Ok(verdict(
        decreasing && (slope + 2.0 / 3.0).abs() <= 0.15 && last <= 0.02,
        format!("λ levels 2..5: {} slope {slope:.2} final rel. error {:.2}%", fmt(&lambda), 100.0 * last),
    ))
}

type Criterion = Box<dyn FnOnce(&mut Cache) -> Result<Verdict, String>>;

fn main() -> ExitCode {
    let mut cache = Cache::default();
    let criteria: [(&str, Criterion); 9] = [
        ("constant solution", Box::new(|_| constant_solution())),
        ("δ=4 table", Box::new(table_delta_4)),
        ("δ=0.6 discrimination", Box::new(table_delta_06)),
        ("δ=-0.1 ordering", Box::new(table_delta_neg)),
        ("interpolation rate", Box::new(|_| interpolation())),
        ("eigenvalue rate doubling", Box::new(eigen_doubling)),
        ("condition number growth", Box::new(|_| condition_growth())),
        ("structural suite", Box::new(|_| structural())),
        ("Laplacian spectrum", Box::new(|_| laplacian_spectrum())),
    ];
    // GRADFEM_CRITERIA=1,8 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("GRADFEM_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let v = f(&mut cache).unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        println!("{} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
