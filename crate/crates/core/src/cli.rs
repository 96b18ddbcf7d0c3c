//! Command implementations behind the `gzcut` binary: matrix files, JSON
//! reports and exit codes.

use crate::canonical::{
    canonical_form, round_trips, sn_experiment, CanonicalError, RoundTripReport, SnReport,
};
use crate::flags::{
    borel_b, flag_F, is_theta_stable, parabolic_dim_formula, parabolic_p, v_carries_standard_flag,
    v_matrix, FlagError, OrbitIndex,
};
use crate::linalg::{eigenvalues_labeled, CMatrix, LinalgError, Tolerances, C64};
use crate::orbits::{estimate_dim, verify_containment, DimTarget, Execution, OrbitError};
use crate::spectra::{coincidence_count, SpectraError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::Path;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NA: i32 = 4;

/// Largest `n` accepted by the Monte Carlo and catalog commands.
pub const MAX_N: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::NotSquare { .. }
            | LinalgError::Empty
            | LinalgError::NonFinite { .. }
            | LinalgError::DimensionMismatch { .. }
            | LinalgError::IndexOutOfRange { .. } => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectraError> for CliError {
    fn from(e: SpectraError) -> Self {
        match e {
            SpectraError::Linalg(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<FlagError> for CliError {
    fn from(e: FlagError) -> Self {
        match e {
            FlagError::Linalg(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<OrbitError> for CliError {
    fn from(e: OrbitError) -> Self {
        match e {
            OrbitError::Linalg(inner) => inner.into(),
            OrbitError::Spectra(inner) => inner.into(),
            OrbitError::Flag(inner) => inner.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<CanonicalError> for CliError {
    fn from(e: CanonicalError) -> Self {
        match e {
            CanonicalError::Linalg(inner) => inner.into(),
            CanonicalError::Spectra(inner) => inner.into(),
            CanonicalError::Flag(inner) => inner.into(),
            CanonicalError::Orbit(inner) => inner.into(),
            CanonicalError::TooSmall(_) | CanonicalError::InvalidXi(_) => {
                CliError::Input(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

/// `{"n": 2, "entries": [[[re, im], [re, im]], [[re, im], [re, im]]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let n = m.n();
        let entries = (0..n)
            .map(|r| (0..n).map(|c| [m.get(r, c).re, m.get(r, c).im]).collect())
            .collect();
        MatrixFile { n, entries }
    }

    pub fn to_matrix(&self) -> Result<CMatrix, CliError> {
        if self.n == 0 {
            return Err(CliError::Input("n must be positive".into()));
        }
        if self.entries.len() != self.n || self.entries.iter().any(|row| row.len() != self.n) {
            return Err(CliError::Input(format!(
                "entries must be a {n} x {n} array of [re, im] pairs",
                n = self.n
            )));
        }
        let rows: Vec<Vec<C64>> = self
            .entries
            .iter()
            .map(|row| row.iter().map(|&[re, im]| C64::new(re, im)).collect())
            .collect();
        Ok(CMatrix::from_rows(&rows)?)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("malformed matrix file: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        MatrixFile::parse(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl Status {
    fn from_pass(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub parameters: Value,
    pub results: Value,
    pub paper_claim: String,
    pub status: Status,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => EXIT_PASS,
            Status::Fail => EXIT_FAIL,
            Status::NotApplicable => EXIT_NA,
        }
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report is serializable");
        let mut s = serde_json::to_string_pretty(&value).expect("value is serializable");
        s.push('\n');
        s
    }

    /// One `key: value` line per top-level result, nested values inline as JSON.
    pub fn to_table(&self) -> String {
        let status = serde_json::to_value(self.status).expect("status is serializable");
        let mut out = format!(
            "command: {}\nstatus: {}\nclaim: {}\n",
            self.command,
            status.as_str().unwrap_or_default(),
            self.paper_claim
        );
        if let Value::Object(map) = &self.parameters {
            for (k, v) in map {
                out.push_str(&format!("param.{k}: {v}\n"));
            }
        }
        match &self.results {
            Value::Object(map) => {
                for (k, v) in map {
                    out.push_str(&format!("{k}: {v}\n"));
                }
            }
            other => out.push_str(&format!("results: {other}\n")),
        }
        out
    }
}

/// Options shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct CommonOptions {
    pub seed: u64,
    pub tol: Tolerances,
    pub execution: Execution,
}

impl Default for CommonOptions {
    fn default() -> Self {
        CommonOptions {
            seed: 0,
            tol: Tolerances::default(),
            execution: Execution::Parallel,
        }
    }
}

fn tol_json(tol: &Tolerances) -> Value {
    json!({
        "eig_match": tol.eig_match,
        "rank_rel": tol.rank_rel,
        "membership": tol.membership,
    })
}

fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

fn matrix_json(m: &CMatrix) -> Value {
    serde_json::to_value(MatrixFile::from_matrix(m).entries).expect("finite entries")
}

fn check_n(n: usize) -> Result<(), CliError> {
    if (2..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "n must lie in 2..={MAX_N}, got {n}"
        )))
    }
}

pub fn cmd_coincidence(input: &MatrixFile, opts: &CommonOptions) -> Result<RunReport, CliError> {
    let x = input.to_matrix()?;
    if x.n() < 2 {
        return Err(CliError::Input(SpectraError::NoCutoff(x.n()).to_string()));
    }
    let report = coincidence_count(&x, &opts.tol)?;
    let cutoff = eigenvalues_labeled(&x.cutoff()?, "cutoff")?;
    let full = eigenvalues_labeled(&x, "full")?;
    let pairs: Vec<Value> = report
        .pairs
        .iter()
        .map(|p| {
            json!({
                "cutoff_value": complex_json(p.cutoff_value),
                "full_value": complex_json(p.full_value),
                "residual": p.residual,
            })
        })
        .collect();
    Ok(RunReport {
        command: "coincidence".into(),
        parameters: json!({ "n": x.n(), "tolerances": tol_json(&opts.tol) }),
        results: json!({
            "l": report.l,
            "pairs": pairs,
            "radius": report.radius,
            "cutoff_spectrum": cutoff.values().iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
            "full_spectrum": full.values().iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
        }),
        paper_claim: "x lies in g(l): x and its cutoff x_{n-1} share exactly l eigenvalues, counted with multiplicity".into(),
        status: Status::Pass,
    })
}

const CANONICAL_CLAIM: &str = "a matrix whose cutoff is regular semisimple and which has l coincidences is K-conjugate into one of the theta-stable parabolics p_{k,k+n-1-l}";

pub fn cmd_canonical(input: &MatrixFile, opts: &CommonOptions) -> Result<RunReport, CliError> {
    let x = input.to_matrix()?;
    if x.n() < 2 {
        return Err(CliError::Input(SpectraError::NoCutoff(x.n()).to_string()));
    }
    let parameters = json!({ "n": x.n(), "tolerances": tol_json(&opts.tol) });
    let r = match canonical_form(&x, &opts.tol) {
        Ok(r) => r,
        Err(err @ CanonicalError::NotRegularSemisimple { .. }) => {
            return Ok(RunReport {
                command: "canonical".into(),
                parameters,
                results: json!({ "message": err.to_string() }),
                paper_claim: CANONICAL_CLAIM.into(),
                status: Status::NotApplicable,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let image_l = coincidence_count(&r.image, &opts.tol)?.l;
    let ok = r.inside && image_l == r.l;
    Ok(RunReport {
        command: "canonical".into(),
        parameters,
        results: json!({
            "l": r.l,
            "idx": [r.idx.i, r.idx.j],
            "pattern": r.pattern.to_string(),
            "flag": r.flag.describe(),
            "k": matrix_json(&r.k.matrix()),
            "image": matrix_json(&r.image),
            "residual": r.residual,
            "inside": r.inside,
            "image_coincidences": image_l,
            "min_gap": r.reduction.min_gap,
            "eigvec_condition": r.reduction.eigvec_condition,
        }),
        paper_claim: CANONICAL_CLAIM.into(),
        status: Status::from_pass(ok),
    })
}

const VERIFY_CLAIM: &str = "Ad(K)p_{i,j} lies in g(>= n-1-(j-i)), and the closures of Ad(K)p_{k,k+n-1-l} are the irreducible components of the closure of g(l)";

pub fn cmd_verify(n: usize, trials: usize, opts: &CommonOptions) -> Result<RunReport, CliError> {
    check_n(n)?;
    let parameters = json!({
        "n": n,
        "trials": trials,
        "seed": opts.seed,
        "tolerances": tol_json(&opts.tol),
    });
    if trials == 0 {
        return Ok(RunReport {
            command: "verify".into(),
            parameters,
            results: json!({}),
            paper_claim: VERIFY_CLAIM.into(),
            status: Status::NotApplicable,
        });
    }
    let mut containment = Vec::new();
    let mut ok = true;
    for idx in OrbitIndex::all(n) {
        let r = verify_containment(idx, n, trials, opts.seed, &opts.tol, opts.execution)?;
        ok &= r.passed();
        containment.push(r);
    }
    let mut trips: Vec<RoundTripReport> = Vec::new();
    for l in 0..n {
        let r = round_trips(n, l, trials, opts.seed, &opts.tol, opts.execution)?;
        ok &= r.passed();
        trips.push(r);
    }
    let violations: usize = containment.iter().map(|r| r.violations).sum();
    let numerical_failures: usize = containment.iter().map(|r| r.numerical_failures).sum();
    Ok(RunReport {
        command: "verify".into(),
        parameters,
        results: json!({
            "containment": containment,
            "round_trips": trips,
            "total_violations": violations,
            "total_numerical_failures": numerical_failures,
        }),
        paper_claim: VERIFY_CLAIM.into(),
        status: Status::from_pass(ok),
    })
}

const DIMS_CLAIM: &str = "dim Ad(K)p_{i,j} = n^2-n+1+(j-i), so each component of g(l) has dimension n^2-l, and dim Ad(K)n_{i,i} = d_n = n^2-2n+1";

pub fn cmd_dims(n: usize, repeats: usize, opts: &CommonOptions) -> Result<RunReport, CliError> {
    check_n(n)?;
    let parameters = json!({
        "n": n,
        "repeats": repeats,
        "seed": opts.seed,
        "tolerances": tol_json(&opts.tol),
    });
    if repeats == 0 {
        return Ok(RunReport {
            command: "dims".into(),
            parameters,
            results: json!({}),
            paper_claim: DIMS_CLAIM.into(),
            status: Status::NotApplicable,
        });
    }
    let mut ok = true;
    let mut saturations = Vec::new();
    for idx in OrbitIndex::all(n) {
        let est = estimate_dim(
            DimTarget::Saturation { i: idx.i, j: idx.j },
            n,
            repeats,
            opts.seed,
            &opts.tol,
        )?;
        ok &= est.matches();
        saturations.push(json!({
            "idx": [idx.i, idx.j],
            "estimate": est.estimate,
            "formula": est.formula,
            "coincidences": n - 1 - idx.length(),
            "component_dim": n * n - (n - 1 - idx.length()),
            "ranks": est.ranks,
            "match": est.matches(),
        }));
    }
    let mut nilpotent = Vec::new();
    let rank = n;
    for i in 1..=n {
        let est = estimate_dim(DimTarget::Nilpotent { i }, n, repeats, opts.seed, &opts.tol)?;
        ok &= est.matches();
        let closed = OrbitIndex { i, j: i };
        let sum_rule = crate::flags::saturation_dim_formula(closed, n) - rank == est.formula;
        ok &= sum_rule;
        nilpotent.push(json!({
            "i": i,
            "estimate": est.estimate,
            "formula": est.formula,
            "ranks": est.ranks,
            "match": est.matches(),
            "sum_rule": sum_rule,
        }));
    }
    Ok(RunReport {
        command: "dims".into(),
        parameters,
        results: json!({ "saturations": saturations, "nilradicals": nilpotent }),
        paper_claim: DIMS_CLAIM.into(),
        status: Status::from_pass(ok),
    })
}

/// Levi blocks of `(p_{i,j})_{n-1}`: `gl(1)^{i-1} ⊕ gl(j-i) ⊕ gl(1)^{n-j}`.
pub fn expected_cutoff_levi(idx: OrbitIndex, n: usize) -> Vec<usize> {
    let mut blocks = vec![1; idx.i - 1];
    if idx.length() > 0 {
        blocks.push(idx.length());
    }
    blocks.extend(vec![1; n - idx.j]);
    blocks
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub idx: OrbitIndex,
    pub flag: String,
    pub v: Vec<Vec<f64>>,
    pub v_carries_standard_flag: bool,
    pub borel_dim: usize,
    pub parabolic_dim: usize,
    pub parabolic_dim_formula: usize,
    pub borel_in_parabolic: bool,
    /// `p_{i,i} = b_{i,i}`; `None` for `i < j`.
    pub closed_parabolic_is_borel: Option<bool>,
    pub theta_stable: bool,
    pub cutoff_levi: Option<Vec<usize>>,
    pub expected_cutoff_levi: Vec<usize>,
    pub bracket_defect: f64,
}

impl CatalogEntry {
    pub fn passed(&self, n: usize) -> bool {
        self.v_carries_standard_flag
            && self.borel_dim == n * (n + 1) / 2
            && self.parabolic_dim == self.parabolic_dim_formula
            && self.borel_in_parabolic
            && self.closed_parabolic_is_borel.unwrap_or(true)
            && self.theta_stable
            && self.cutoff_levi.as_ref() == Some(&self.expected_cutoff_levi)
            && self.bracket_defect < 1e-12
    }
}

pub fn catalog_entry(
    idx: OrbitIndex,
    n: usize,
    tol: &Tolerances,
) -> Result<CatalogEntry, CliError> {
    let b = borel_b(idx, n)?;
    let p = parabolic_p(idx, n)?;
    let v = v_matrix(idx, n)?;
    let cutoff_levi = if n >= 2 {
        p.cutoff_projection(tol)?.standard_levi_blocks(tol)
    } else {
        None
    };
    Ok(CatalogEntry {
        idx,
        flag: flag_F(idx, n)?.describe(),
        v: (0..n)
            .map(|r| (0..n).map(|c| v.get(r, c).re).collect())
            .collect(),
        v_carries_standard_flag: v_carries_standard_flag(idx, n, tol)?,
        borel_dim: b.dim(),
        parabolic_dim: p.dim(),
        parabolic_dim_formula: parabolic_dim_formula(idx, n),
        borel_in_parabolic: b.is_subalgebra_of(&p, tol),
        closed_parabolic_is_borel: idx.is_closed().then(|| p.same_span(&b, tol)),
        theta_stable: is_theta_stable(&p, tol)?,
        cutoff_levi,
        expected_cutoff_levi: expected_cutoff_levi(idx, n),
        bracket_defect: p.bracket_defect().max(b.bracket_defect()),
    })
}

const CATALOG_CLAIM: &str = "there are n closed K-orbits and n(n-1)/2 others; v_{i,j} carries the standard flag to F_{i,j}, b_{i,j} lies in the theta-stable parabolic p_{i,j}, and (p_{i,j})_{n-1} has Levi factor gl(1)^{n-1-l} + gl(l)";

pub fn cmd_catalog(n: usize, opts: &CommonOptions) -> Result<RunReport, CliError> {
    check_n(n)?;
    let mut entries = Vec::new();
    let mut ok = true;
    for idx in OrbitIndex::all(n) {
        let e = catalog_entry(idx, n, &opts.tol)?;
        ok &= e.passed(n);
        entries.push(e);
    }
    let closed = entries.iter().filter(|e| e.idx.is_closed()).count();
    Ok(RunReport {
        command: "catalog".into(),
        parameters: json!({ "n": n, "tolerances": tol_json(&opts.tol) }),
        results: json!({
            "orbit_count": entries.len(),
            "closed_orbits": closed,
            "orbits": entries,
        }),
        paper_claim: CATALOG_CLAIM.into(),
        status: Status::from_pass(ok),
    })
}

const SN_CLAIM: &str = "SN_n is the union of the n components Ad(K)n_{i,i}; only the components i = 1 and i = n contain n-strongly regular elements";

pub fn cmd_sn(n: usize, trials: usize, opts: &CommonOptions) -> Result<RunReport, CliError> {
    check_n(n)?;
    let parameters = json!({
        "n": n,
        "trials": trials,
        "seed": opts.seed,
        "tolerances": tol_json(&opts.tol),
    });
    if trials == 0 {
        return Ok(RunReport {
            command: "sn".into(),
            parameters,
            results: json!({}),
            paper_claim: SN_CLAIM.into(),
            status: Status::NotApplicable,
        });
    }
    let mut components: Vec<SnReport> = Vec::new();
    for i in 1..=n {
        components.push(sn_experiment(
            n,
            i,
            trials,
            opts.seed,
            &opts.tol,
            opts.execution,
        )?);
    }
    let ok = components.iter().all(|c| c.members == c.trials);
    let rates: Vec<Value> = components
        .iter()
        .map(|c| json!({ "i": c.i, "strong_regularity_rate": c.strong_regularity_rate() }))
        .collect();
    Ok(RunReport {
        command: "sn".into(),
        parameters,
        results: json!({ "components": components, "strong_regularity": rates }),
        paper_claim: SN_CLAIM.into(),
        status: Status::from_pass(ok),
    })
}
