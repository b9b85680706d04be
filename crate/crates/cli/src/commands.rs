use std::collections::BTreeMap;
use std::path::Path;

use hmmr_core::examples::{fox_rubin as fox_rubin_model, published_check, FoxRubinParams, PublishedCheck};
use hmmr_core::hankel::{build_hankel, numerical_rank};
use hmmr_core::io::{read_model, write_json, ModelFile, TensorFile};
use hmmr_core::reduce::factor_residuals;
use hmmr_core::sim::{empirical_tensor, sample_path};
use hmmr_core::{
    analyze as analyze_model, build_factors, build_tensor, compose, max_abs_diff, reduce_effective, reduce_null,
    reduce_reachable, Error, FactorTriple, Model, Realization, Reduction, ReductionKind, Result, SubspaceReport,
    Tensor3, Tolerances,
};
use serde::Serialize;

use crate::output::{g6, g6_list, print_json, rows};
use crate::GlobalOpts;

fn load(path: &Path, tol: &Tolerances) -> Result<Model> {
    read_model(path, tol).map_err(|e| match e {
        Error::Io(m) => Error::Io(format!("{}: {m}", path.display())),
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        e => e,
    })
}

fn reduce_with(kind: ReductionKind, model: &Model, tol: &Tolerances) -> Result<Reduction> {
    match kind {
        ReductionKind::Reachable => reduce_reachable(model, tol),
        ReductionKind::Null => reduce_null(model, tol),
        ReductionKind::Effective => reduce_effective(model, tol),
    }
}

/// Tensor agreement is certified entrywise; the allowance grows with the
/// number of entries.
fn tensor_allowance(t: &Tensor3, tol: &Tolerances) -> f64 {
    t.values().len() as f64 * tol.res
}

fn certify(what: &str, diff: f64, allowance: f64) -> Result<()> {
    if diff <= allowance {
        Ok(())
    } else {
        Err(Error::ReductionInconsistent {
            identity: what.to_string(),
            residual: diff,
            tolerance: allowance,
        })
    }
}

fn warn_all<T: std::fmt::Display>(warnings: &[T]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

#[derive(Serialize)]
struct AnalyzeReport {
    k: usize,
    d: usize,
    dim_reachable: usize,
    dim_null: usize,
    dim_effective: Option<usize>,
    /// Per symbol: whether its reachable block admits unit column sums.
    unit_sum_ok: Vec<bool>,
    warnings: Vec<String>,
}

impl AnalyzeReport {
    fn new(r: &SubspaceReport) -> Self {
        Self {
            k: r.k,
            d: r.d,
            dim_reachable: r.dim_reachable,
            dim_null: r.dim_null,
            dim_effective: r.dim_effective,
            unit_sum_ok: r.unit_sum_ok.clone(),
            warnings: r.warnings.iter().map(|w| w.to_string()).collect(),
        }
    }

    fn line(&self) -> String {
        let eff = self.dim_effective.map_or("undefined".to_string(), |e| e.to_string());
        let violated: Vec<String> = self
            .unit_sum_ok
            .iter()
            .enumerate()
            .filter(|(_, &ok)| !ok)
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        let status = if violated.is_empty() {
            "ok".to_string()
        } else {
            format!("violated(symbols {})", violated.join(","))
        };
        format!(
            "k={} dim_VR={} dim_VN={} k̂={} d={} unit_sums={}",
            self.k, self.dim_reachable, self.dim_null, eff, self.d, status
        )
    }
}

#[derive(Serialize)]
struct BasesFile {
    #[serde(rename = "T_R", skip_serializing_if = "Option::is_none")]
    t_r: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    col_symbol: Option<Vec<usize>>,
    #[serde(rename = "T_N")]
    t_n: Vec<Vec<f64>>,
    row_symbol: Vec<usize>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    t: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    effective_row_symbol: Option<Vec<usize>>,
}

pub fn analyze(g: &GlobalOpts, input: &Path, bases: Option<&Path>) -> Result<()> {
    let tol = g.tolerances();
    let model = load(input, &tol)?;
    let report = analyze_model(&model, &tol)?;
    if let Some(path) = bases {
        let file = BasesFile {
            t_r: report.reachable.as_ref().map(|b| rows(&b.t)),
            col_symbol: report.reachable.as_ref().map(|b| b.col_symbol.clone()),
            t_n: rows(&report.null.t),
            row_symbol: report.null.row_symbol.clone(),
            t: report.effective.as_ref().map(|e| rows(&e.t)),
            effective_row_symbol: report.effective.as_ref().map(|e| e.row_symbol.clone()),
        };
        write_json(path, &file)?;
    }
    let out = AnalyzeReport::new(&report);
    if g.json() {
        print_json(&out);
    } else {
        println!("{}", out.line());
        warn_all(&report.warnings);
    }
    Ok(())
}

#[derive(Serialize)]
struct ReduceReport {
    mode: String,
    k: usize,
    order: usize,
    trivial: bool,
    residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tensor_max_abs_diff: Option<f64>,
    warnings: Vec<String>,
}

pub fn reduce(g: &GlobalOpts, kind: ReductionKind, input: &Path, out: &Path, check_depth: Option<usize>) -> Result<()> {
    let tol = g.tolerances();
    let model = load(input, &tol)?;
    let red = reduce_with(kind, &model, &tol)?;
    let mut residuals = red.residuals.clone();
    let mut tensor_diff = None;
    if let Some(n) = check_depth {
        for (name, v) in factor_residuals(&red, &model, n, &tol)? {
            residuals.insert(format!("factors(n={n})/{name}"), v);
        }
        let m = build_tensor(&model, n, &tol)?;
        let diff = max_abs_diff(&m, &build_tensor(&red.realization, n, &tol)?)?;
        residuals.insert(format!("tensor(n={n}) max_abs_diff"), diff);
        certify("reduced tensor", diff, tensor_allowance(&m, &tol))?;
        tensor_diff = Some(diff);
    }
    let mut file = ModelFile::from_reduction(&red);
    file.residuals = Some(residuals.clone());
    write_json(out, &file)?;

    let report = ReduceReport {
        mode: kind.to_string(),
        k: model.k(),
        order: red.order(),
        trivial: red.trivial,
        residuals,
        check_depth,
        tensor_max_abs_diff: tensor_diff,
        warnings: red.warnings.iter().map(|w| w.to_string()).collect(),
    };
    if g.json() {
        print_json(&report);
    } else {
        println!(
            "mode={} k={} order={} trivial={} -> {}",
            report.mode,
            report.k,
            report.order,
            report.trivial,
            out.display()
        );
        for (name, v) in &report.residuals {
            println!("  {name}: {}", g6(*v));
        }
        warn_all(&red.warnings);
    }
    Ok(())
}

#[derive(Serialize)]
struct FactorsFile {
    n: usize,
    d: usize,
    r: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
}

impl FactorsFile {
    fn new(f: &FactorTriple, d: usize) -> Self {
        Self {
            n: f.n,
            d,
            r: f.r(),
            a: rows(&f.a),
            b: rows(&f.b),
            c: rows(&f.c),
        }
    }
}

#[derive(Serialize)]
struct TensorReport {
    n: usize,
    dims: [usize; 3],
    sum: f64,
    components: usize,
    factor_max_abs_diff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    check_components: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check_max_abs_diff: Option<f64>,
}

pub fn tensor(
    g: &GlobalOpts,
    input: &Path,
    n: usize,
    factors_out: Option<&Path>,
    check_against: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let tol = g.tolerances();
    let model = load(input, &tol)?;
    let m = build_tensor(&model, n, &tol)?;
    let f = build_factors(&model, n, &tol)?;
    let factor_diff = max_abs_diff(&m, &compose(&f)?)?;
    let (dims_a, dims_b, dims_c) = m.dims();
    let mut report = TensorReport {
        n,
        dims: [dims_a, dims_b, dims_c],
        sum: m.sum(),
        components: f.r(),
        factor_max_abs_diff: factor_diff,
        check_components: None,
        check_max_abs_diff: None,
    };
    if let Some(path) = check_against {
        let other = load(path, &tol)?;
        if other.d() != model.d() {
            return Err(Error::Dimension(format!("alphabets differ: {} vs {}", model.d(), other.d())));
        }
        report.check_components = Some(other.k());
        report.check_max_abs_diff = Some(max_abs_diff(&m, &build_tensor(&other, n, &tol)?)?);
    }
    if let Some(path) = factors_out {
        write_json(path, &FactorsFile::new(&f, model.d()))?;
    }
    if let Some(path) = out {
        write_json(path, &TensorFile::from_tensor(&m))?;
    }

    if g.json() {
        print_json(&report);
    } else {
        println!(
            "n={} dims={}x{}x{} sum={} components={}",
            n,
            dims_a,
            dims_b,
            dims_c,
            g6(report.sum),
            report.components
        );
        println!("max_abs_diff(M, A⊗B⊗C) = {}", g6(factor_diff));
        if let (Some(r), Some(diff)) = (report.check_components, report.check_max_abs_diff) {
            println!("max_abs_diff(M, reference) = {} (reference components={r})", g6(diff));
        }
    }
    let allowance = tensor_allowance(&m, &tol);
    certify("A⊗B⊗C", factor_diff, allowance)?;
    if let Some(diff) = report.check_max_abs_diff {
        certify("reference tensor", diff, allowance)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct HankelReport {
    depth: usize,
    rows: usize,
    cols: usize,
    block_sizes: Vec<usize>,
    singular_values: Vec<f64>,
    threshold: f64,
    tail_bound: f64,
    rank: usize,
    gap: Option<f64>,
    dim_effective: Option<usize>,
    matches_effective: Option<bool>,
    warnings: Vec<String>,
}

fn hankel_report(model: &Model, depth: usize, dim_effective: Option<usize>, tol: &Tolerances) -> Result<HankelReport> {
    let h = build_hankel(model, depth, tol)?;
    let rank = numerical_rank(&h.h, tol);
    Ok(HankelReport {
        depth,
        rows: h.h.nrows(),
        cols: h.h.ncols(),
        block_sizes: (0..=depth).map(|i| model.d().pow(i as u32)).collect(),
        singular_values: rank.singular_values.clone(),
        threshold: rank.threshold,
        tail_bound: rank.tail_bound,
        rank: rank.rank,
        gap: rank.gap,
        dim_effective,
        matches_effective: dim_effective.map(|e| e == rank.rank),
        warnings: rank.warnings.iter().map(|w| w.to_string()).collect(),
    })
}

pub fn hankel(g: &GlobalOpts, input: &Path, depth: usize) -> Result<()> {
    let tol = g.tolerances();
    let model = load(input, &tol)?;
    let eff = analyze_model(&model, &tol)?.dim_effective;
    let r = hankel_report(&model, depth, eff, &tol)?;
    if g.json() {
        print_json(&r);
    } else {
        println!("depth={} size={}x{} block_sizes={:?}", r.depth, r.rows, r.cols, r.block_sizes);
        let shown = (r.rank + 3).min(r.singular_values.len());
        println!("singular_values={}", g6_list(&r.singular_values[..shown]));
        println!(
            "threshold={} rank={} gap={}",
            g6(r.threshold),
            r.rank,
            r.gap.map_or("n/a".to_string(), g6)
        );
        match r.dim_effective {
            Some(e) => println!("k̂={e} {}", if e == r.rank { "match" } else { "MISMATCH" }),
            None => println!("k̂=undefined"),
        }
        warn_all(&r.warnings);
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    steps: usize,
    seed: u64,
    n: usize,
    windows: usize,
    max_abs_dev: f64,
    /// Entries whose deviation exceeds `4 sqrt(p (1 - p) / windows)`.
    outside_4sigma: usize,
    entries: usize,
}

#[derive(Serialize)]
struct EmpiricalFile {
    #[serde(flatten)]
    tensor: TensorFile,
    windows: usize,
    seed: u64,
}

pub fn simulate(g: &GlobalOpts, input: &Path, steps: usize, seed: u64, n: usize, emit: Option<&Path>) -> Result<()> {
    let tol = g.tolerances();
    let model = load(input, &tol)?;
    let hmm = model
        .as_hmm()
        .ok_or_else(|| Error::NotProper("simulation needs a proper HMM, not a quasi-realization".into()))?;
    let path = sample_path(hmm, steps, seed, &tol)?;
    let emp = empirical_tensor(&path, n)?;
    let exact = build_tensor(hmm, n, &tol)?;
    let w = emp.windows as f64;
    let outside = exact
        .values()
        .iter()
        .zip(emp.tensor.values())
        .filter(|(&p, &q)| (p - q).abs() > 4.0 * (p * (1.0 - p) / w).max(0.0).sqrt())
        .count();
    let report = SimulateReport {
        steps,
        seed,
        n,
        windows: emp.windows,
        max_abs_dev: max_abs_diff(&exact, &emp.tensor)?,
        outside_4sigma: outside,
        entries: exact.values().len(),
    };
    if let Some(p) = emit {
        let file = EmpiricalFile {
            tensor: TensorFile::from_tensor(&emp.tensor),
            windows: emp.windows,
            seed,
        };
        write_json(p, &file)?;
    }
    if g.json() {
        print_json(&report);
    } else {
        println!("steps={steps} seed={seed} n={n} windows={}", report.windows);
        println!(
            "max_abs_dev={} outside_4sigma={}/{}",
            g6(report.max_abs_dev),
            report.outside_4sigma,
            report.entries
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ExampleReport {
    m: usize,
    lambda: f64,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    paper_check: Option<PublishedCheck>,
}

fn print_check(c: &PublishedCheck, tol: &Tolerances) {
    println!(
        "dim_VR={} basis_rank={} e_hat_residual={} O_hat_residual={} span_angle={}",
        c.dim_reachable,
        c.basis_rank,
        g6(c.e_hat_residual),
        g6(c.o_hat_residual),
        g6(c.span_angle)
    );
    println!(
        "Q T_R - T_R Q_hat: algorithmic={} printed={}",
        g6(c.algorithmic_residual),
        g6(c.printed_residual)
    );
    println!("Q_hat discrepancies (printed vs T_R^+ Q T_R): {}", c.q_hat_discrepancies.len());
    for d in &c.q_hat_discrepancies {
        println!(
            "  [{},{}] printed={} recomputed={} delta={}",
            d.row + 1,
            d.col + 1,
            g6(d.printed),
            g6(d.recomputed),
            g6(d.delta)
        );
    }
    println!("rho_hat discrepancies: {}", c.rho_hat_discrepancies.len());
    for d in &c.rho_hat_discrepancies {
        println!(
            "  [{}] printed={} recomputed={} delta={}",
            d.row + 1,
            g6(d.printed),
            g6(d.recomputed),
            g6(d.delta)
        );
    }
    println!(
        "Q_hat rho_hat - rho_hat: printed={} recomputed={}",
        g6(c.printed_rho_fixed_point),
        g6(c.recomputed_rho_fixed_point)
    );
    println!(
        "defining relations: {}",
        if c.defining_relations_hold(tol) { "hold" } else { "FAIL" }
    );
}

pub fn fox_rubin(g: &GlobalOpts, m: usize, lambda: f64, out: Option<&Path>, check: bool) -> Result<()> {
    let tol = g.tolerances();
    let params = FoxRubinParams::new(m, lambda)?;
    let model = Model::Hmm(fox_rubin_model(params)?);
    if let Some(path) = out {
        write_json(path, &ModelFile::from_model(&model))?;
    }
    let audit = if check { Some(published_check(params, &tol)?) } else { None };
    if g.json() {
        print_json(&ExampleReport {
            m,
            lambda,
            k: model.k(),
            out: out.map(|p| p.display().to_string()),
            paper_check: audit.clone(),
        });
    } else {
        match out {
            Some(p) => println!("fox-rubin m={m} lambda={} k={} -> {}", g6(lambda), model.k(), p.display()),
            None if audit.is_none() => print!("{}", serde_json::to_string_pretty(&ModelFile::from_model(&model))? + "\n"),
            None => println!("fox-rubin m={m} lambda={} k={}", g6(lambda), model.k()),
        }
        if let Some(c) = &audit {
            print_check(c, &tol);
        }
    }
    if let Some(c) = &audit {
        if !c.defining_relations_hold(&tol) {
            return Err(Error::ReductionInconsistent {
                identity: "published reduced system".into(),
                residual: c.algorithmic_residual.max(c.e_hat_residual).max(c.o_hat_residual),
                tolerance: tol.res,
            });
        }
    }
    Ok(())
}

/// One line of the summary table; the combining hat takes no column.
fn row(label: impl AsRef<str>, value: impl std::fmt::Display) {
    let label = label.as_ref();
    let width = label.chars().filter(|&c| c != '\u{302}').count();
    println!("{label}{}{value}", " ".repeat(22usize.saturating_sub(width)));
}

#[derive(Serialize)]
struct PipelineReport {
    k: usize,
    d: usize,
    dim_reachable: usize,
    dim_null: usize,
    /// `k - dim V_N`, the order of the null-space reduction.
    dim_null_complement: usize,
    dim_effective: Option<usize>,
    n: usize,
    /// `max |M - compose(factors)|` for the original model and each reduction.
    tensor_max_abs_diff: BTreeMap<String, f64>,
    orders: BTreeMap<String, usize>,
    max_residual: BTreeMap<String, f64>,
    hankel: HankelReport,
}

pub fn pipeline(g: &GlobalOpts, input: &Path, n: usize, hankel_depth: Option<usize>) -> Result<()> {
    let tol = g.tolerances();
    let model = load(input, &tol)?;
    let report = analyze_model(&model, &tol)?;
    let m = build_tensor(&model, n, &tol)?;
    let mut diffs = BTreeMap::new();
    let mut orders = BTreeMap::new();
    let mut max_residual = BTreeMap::new();
    diffs.insert("factors".to_string(), max_abs_diff(&m, &compose(&build_factors(&model, n, &tol)?)?)?);
    for kind in [ReductionKind::Reachable, ReductionKind::Null, ReductionKind::Effective] {
        let red = reduce_with(kind, &model, &tol)?;
        let reduced = compose(&build_factors(&red.realization, n, &tol)?)?;
        diffs.insert(kind.to_string(), max_abs_diff(&m, &reduced)?);
        orders.insert(kind.to_string(), red.order());
        max_residual.insert(kind.to_string(), red.max_residual());
    }
    let hankel = hankel_report(&model, hankel_depth.unwrap_or(model.k()), report.dim_effective, &tol)?;
    let out = PipelineReport {
        k: report.k,
        d: report.d,
        dim_reachable: report.dim_reachable,
        dim_null: report.dim_null,
        dim_null_complement: report.k - report.dim_null,
        dim_effective: report.dim_effective,
        n,
        tensor_max_abs_diff: diffs,
        orders,
        max_residual,
        hankel,
    };
    if g.json() {
        print_json(&out);
    } else {
        let eff = out.dim_effective.map_or("undefined".to_string(), |e| e.to_string());
        row("k", out.k);
        row("k̂_R", out.dim_reachable);
        row("k̂_N", out.dim_null_complement);
        row("k̂", eff);
        for (name, v) in &out.tensor_max_abs_diff {
            row(format!("diff[{name}] n={n}"), g6(*v));
        }
        for (name, v) in &out.max_residual {
            row(format!("residual[{name}]"), g6(*v));
        }
        row(format!("hankel rank d={}", out.hankel.depth), out.hankel.rank);
        row("hankel gap", out.hankel.gap.map_or("n/a".to_string(), g6));
        warn_all(&report.warnings);
        warn_all(&out.hankel.warnings);
    }
    let allowance = tensor_allowance(&m, &tol);
    for (name, &v) in &out.tensor_max_abs_diff {
        certify(&format!("{name} tensor"), v, allowance)?;
    }
    Ok(())
}
