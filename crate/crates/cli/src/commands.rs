//! Implementations of the subcommands.

use std::fmt;

use mlz::compose::{exterior_power_s, fermion_sector_model, ComposeError};
use mlz::constraints::{
    band_relation_residuals, chain_relation_residual, nogo_pairs, pseudo_bowtie_predict,
    verify_hierarchy, ConstraintEntry, ConstraintError,
};
use mlz::model::{CanonicalizationReport, MlzModel, ModelError};
use mlz::modelfile::{parse_model, write_model, FileError};
use mlz::propagator::{
    converge, default_t_end, propagate, transition_matrix, PropagateError, PropagationConfig,
    ScatteringMatrix,
};
use mlz::semiclassical::{semiclassical_p, SemiclassicalError};
use mlz::{Model64, C};

use crate::report::{digest, num, Report};
use crate::{CommonArgs, PropagationArgs};

const COMPARE_TOL: f64 = 2e-3;
const PREDICT_TOL: f64 = 1e-2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    File(std::io::Error),
    Parse(FileError),
    Model(ModelError),
    Numerics(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::File(_) | CliError::Parse(_) => 1,
            CliError::Model(_) | CliError::Numerics(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::File(e) => write!(f, "cannot read model file: {e}"),
            CliError::Parse(e) => write!(f, "{e}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Numerics(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        CliError::Parse(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}

impl From<PropagateError> for CliError {
    fn from(e: PropagateError) -> Self {
        CliError::Numerics(e.to_string())
    }
}

impl From<SemiclassicalError> for CliError {
    fn from(e: SemiclassicalError) -> Self {
        CliError::Numerics(e.to_string())
    }
}

impl From<ComposeError> for CliError {
    fn from(e: ComposeError) -> Self {
        CliError::Numerics(e.to_string())
    }
}

impl From<ConstraintError> for CliError {
    fn from(e: ConstraintError) -> Self {
        CliError::Numerics(e.to_string())
    }
}

type CmdOutcome = Result<(String, i32), CliError>;

fn load(path: &str) -> Result<(Model64, CanonicalizationReport), CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::File)?;
    let raw = parse_model::<f64>(&text)?;
    Ok(raw.canonicalize()?)
}

fn config(
    model: &Model64,
    prop: &PropagationArgs,
    tol: Option<f64>,
) -> Result<PropagationConfig<f64>, CliError> {
    let t_end = prop.tmax.unwrap_or_else(|| default_t_end(model));
    if t_end <= 0.0 {
        return Err(CliError::Usage("tmax must be positive".into()));
    }
    match prop.scheme.as_str() {
        "adaptive" => {
            let mut cfg = PropagationConfig::adaptive(t_end);
            if let Some(t) = tol {
                if t <= 0.0 {
                    return Err(CliError::Usage("tol must be positive".into()));
                }
                cfg = cfg.with_tolerance(t);
            }
            Ok(cfg)
        }
        "raw" => {
            let dt = prop.dt.unwrap_or(5e-4);
            if dt <= 0.0 {
                return Err(CliError::Usage("dt must be positive".into()));
            }
            Ok(PropagationConfig::raw(t_end, dt))
        }
        other => Err(CliError::Usage(format!("unknown scheme `{other}`"))),
    }
}

fn preamble(
    rep: &mut Report,
    what: &str,
    common: &CommonArgs,
    model: &Model64,
    perm: &CanonicalizationReport,
) {
    rep.comment(format!("{what} {}", common.model));
    rep.comment(format!("model-digest {}", digest(&write_model(model))));
    let perm_str: Vec<String> = perm
        .permutation
        .iter()
        .map(|p| (p + 1).to_string())
        .collect();
    rep.comment(format!("canonical-permutation {}", perm_str.join(" ")));
}

pub fn validate(common: &CommonArgs) -> CmdOutcome {
    let text = std::fs::read_to_string(&common.model).map_err(CliError::File)?;
    let raw = parse_model::<f64>(&text)?;
    let mut rep = Report::new();
    rep.comment(format!("validate {}", common.model));
    match raw.canonicalize() {
        Ok((model, perm)) => {
            rep.comment(format!("model-digest {}", digest(&write_model(&model))));
            let perm_str: Vec<String> = perm
                .permutation
                .iter()
                .map(|p| (p + 1).to_string())
                .collect();
            rep.comment(format!("canonical-permutation {}", perm_str.join(" ")));
            rep.header(&["level", "slope", "energy", "input-level"]);
            for k in 0..model.dimension() {
                rep.row(&[
                    (k + 1).to_string(),
                    num(model.slopes()[k]),
                    num(model.energies()[k]),
                    (perm.permutation[k] + 1).to_string(),
                ]);
            }
            let mut count = 0;
            for i in 0..model.dimension() {
                for j in (i + 1)..model.dimension() {
                    if model.coupling(i, j).norm_sqr() != 0.0 {
                        count += 1;
                    }
                }
            }
            rep.comment(format!("couplings {count}"));
            rep.comment("status OK");
            Ok((rep.finish(), 0))
        }
        Err(e) => {
            rep.comment(format!("error: {e}"));
            rep.comment("status INVALID");
            Ok((rep.finish(), 2))
        }
    }
}

fn matrices_section(
    rep: &mut Report,
    s: &ScatteringMatrix<f64>,
    perm: &CanonicalizationReport,
    unitarity_tol: f64,
) {
    rep.comment(format!(
        "unitarity-defect {} (tol {})",
        num(s.unitarity_defect()),
        num(unitarity_tol)
    ));
    let s_user = perm.matrix_to_input_order(s.entries());
    rep.complex_matrix(
        "S, input level order, rows final / columns initial",
        &s_user,
    );
    let p = transition_matrix(s);
    let p_user = perm.matrix_to_input_order(p.entries());
    rep.comment(format!(
        "doubly-stochastic-defect {}",
        num(p.stochastic_defect())
    ));
    rep.real_matrix("P = |S|^2, input level order", &p_user);
}

pub fn simulate(
    common: &CommonArgs,
    prop: &PropagationArgs,
    tol: Option<f64>,
    schedule: Option<&str>,
) -> CmdOutcome {
    let (model, perm) = load(&common.model)?;
    let cfg = config(&model, prop, tol)?;
    let mut rep = Report::new();
    preamble(&mut rep, "simulate", common, &model, &perm);
    rep.comment(format!("scheme {} tmax {}", prop.scheme, num(cfg.t_end)));

    let s = if let Some(sched) = schedule {
        let windows: Vec<f64> = sched
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad schedule entry `{t}`")))
            })
            .collect::<Result<_, _>>()?;
        let (s, estimate) = converge(&model, &cfg, &windows, 1e-3)?;
        rep.comment(format!(
            "converge-estimate {} (tol {})",
            num(estimate),
            num(1e-3)
        ));
        s
    } else {
        propagate(&model, &cfg)?
    };
    matrices_section(&mut rep, &s, &perm, cfg.unitarity_tol);
    Ok((rep.finish(), 0))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifySelection {
    pub hc: bool,
    pub nogo: bool,
    pub band: bool,
    pub chain: bool,
    pub unitarity: bool,
}

impl VerifySelection {
    fn any(&self) -> bool {
        self.hc || self.nogo || self.band || self.chain || self.unitarity
    }
}

fn entry_row(rep: &mut Report, e: &ConstraintEntry<f64>) {
    rep.row(&[
        e.name.clone(),
        num(e.lhs.re),
        num(e.lhs.im),
        num(e.rhs),
        num(e.residual),
        num(e.tolerance),
        if e.passed { "pass" } else { "FAIL" }.to_string(),
    ]);
}

pub fn verify(
    common: &CommonArgs,
    prop: &PropagationArgs,
    selection: VerifySelection,
    tol: f64,
) -> CmdOutcome {
    let (model, perm) = load(&common.model)?;
    let cfg = config(&model, prop, None)?;
    let run_all = !selection.any();
    let mut rep = Report::new();
    preamble(&mut rep, "verify", common, &model, &perm);
    rep.comment(format!("tmax {} tol {}", num(cfg.t_end), num(tol)));

    let s = propagate(&model, &cfg)?;
    let p = transition_matrix(&s);
    rep.header(&[
        "check",
        "lhs-re",
        "lhs-im",
        "rhs",
        "residual",
        "tolerance",
        "status",
    ]);

    let mut entries: Vec<ConstraintEntry<f64>> = Vec::new();
    if run_all || selection.unitarity {
        entries.push(ConstraintEntry::new(
            "unitarity".into(),
            C::new(1.0 - s.unitarity_defect(), 0.0),
            1.0,
            cfg.unitarity_tol,
        ));
    }
    if run_all || selection.hc {
        entries.extend(verify_hierarchy(&model, &s, tol).entries);
    }
    if run_all || selection.nogo {
        for (r, k) in nogo_pairs(&model) {
            entries.push(ConstraintEntry::new(
                format!("nogo[S{}{}]", r + 1, k + 1),
                s.entry(r, k),
                0.0,
                tol,
            ));
        }
    }
    if run_all || selection.band {
        match band_relation_residuals(&model, &p) {
            Ok(report) => {
                // Re-tolerance for propagated data.
                entries.extend(
                    report
                        .entries
                        .into_iter()
                        .map(|e| ConstraintEntry::new(e.name, e.lhs, e.rhs, tol)),
                );
            }
            Err(e) if selection.band => {
                return Err(CliError::Usage(format!("--band not applicable: {e}")));
            }
            Err(_) => rep.comment("band: skipped (structure not applicable)"),
        }
    }
    if run_all || selection.chain {
        match chain_relation_residual(&model, &p) {
            Ok(residual) => entries.push(ConstraintEntry::new(
                "chain[P22-P12]".into(),
                C::new(residual, 0.0),
                0.0,
                tol,
            )),
            Err(e) if selection.chain => {
                return Err(CliError::Usage(format!("--chain not applicable: {e}")));
            }
            Err(_) => rep.comment("chain: skipped (structure not applicable)"),
        }
    }

    let mut all_pass = true;
    for e in &entries {
        entry_row(&mut rep, e);
        all_pass &= e.passed;
    }
    rep.comment(if all_pass { "status OK" } else { "status FAIL" });
    Ok((rep.finish(), if all_pass { 0 } else { 3 }))
}

pub fn fermionize(
    common: &CommonArgs,
    particles: usize,
    compare: bool,
    prop: &PropagationArgs,
) -> CmdOutcome {
    let (model, perm) = load(&common.model)?;
    let n = model.dimension();
    if particles == 0 || particles > n {
        return Err(CliError::Usage(format!(
            "--particles must lie in 1..={n} for this model"
        )));
    }
    let mut rep = Report::new();
    preamble(&mut rep, "fermionize", common, &model, &perm);
    rep.comment(format!("particles {particles}"));

    if particles == n {
        // Fully filled sector: a single state whose amplitude is det S.
        let cfg = config(&model, prop, None)?;
        let s = propagate(&model, &cfg)?;
        let det = exterior_power_s(&s, n)?.entry(0, 0);
        let dev = (det.norm() - 1.0).abs();
        rep.header(&[
            "check",
            "lhs-re",
            "lhs-im",
            "rhs",
            "residual",
            "tolerance",
            "status",
        ]);
        entry_row(
            &mut rep,
            &ConstraintEntry::new(
                "detS-modulus".into(),
                C::new(det.norm(), 0.0),
                1.0,
                COMPARE_TOL,
            ),
        );
        return Ok((rep.finish(), if dev < COMPARE_TOL { 0 } else { 3 }));
    }

    let (sector, basis) = fermion_sector_model(&model, particles)?;
    for (k, subset) in basis.subsets.iter().enumerate() {
        let levels: Vec<String> = subset
            .iter()
            .map(|&c| (perm.permutation[c] + 1).to_string())
            .collect();
        rep.comment(format!(
            "sector level {} <- input levels ({})",
            k + 1,
            levels.join(",")
        ));
    }
    rep.raw(&write_model(&sector));

    let mut code = 0;
    if compare {
        let cfg = config(&model, prop, None)?;
        let s1 = propagate(&model, &cfg)?;
        let wedge = exterior_power_s(&s1, particles)?;
        let cfg2 = PropagationConfig {
            t_end: cfg.t_end,
            ..PropagationConfig::adaptive(cfg.t_end)
        };
        let s2 = propagate(&sector, &cfg2)?;
        let dim = sector.dimension();
        let mut dev = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let minor = wedge.entry(basis.lex_of_canonical[i], basis.lex_of_canonical[j]);
                dev = dev.max((s2.entry(i, j) - minor).norm());
            }
        }
        rep.comment(format!(
            "compare max |wedge^{particles}(S) - S_sector| = {} (tol {})",
            num(dev),
            num(COMPARE_TOL)
        ));
        if dev >= COMPARE_TOL {
            code = 3;
        }
    }
    Ok((rep.finish(), code))
}

pub fn semiclassical(common: &CommonArgs, compare: bool, prop: &PropagationArgs) -> CmdOutcome {
    let (model, perm) = load(&common.model)?;
    let p = semiclassical_p(&model)?;
    let mut rep = Report::new();
    preamble(&mut rep, "semiclassical", common, &model, &perm);
    rep.comment(format!(
        "doubly-stochastic-defect {}",
        num(p.stochastic_defect())
    ));
    rep.real_matrix(
        "P from trajectory rules, input level order",
        &perm.matrix_to_input_order(p.entries()),
    );
    let mut code = 0;
    if compare {
        let cfg = config(&model, prop, None)?;
        let s = propagate(&model, &cfg)?;
        let pp = transition_matrix(&s);
        let dev = (pp.entries() - p.entries()).amax();
        rep.comment(format!(
            "compare max |P_prop - P_ansatz| = {} (tol {})",
            num(dev),
            num(COMPARE_TOL)
        ));
        if dev >= COMPARE_TOL {
            code = 3;
        }
    }
    Ok((rep.finish(), code))
}

struct SweepSpec {
    from: f64,
    to: f64,
    points: usize,
}

fn parse_sweep(param: &str) -> Result<SweepSpec, CliError> {
    let parts: Vec<&str> = param.split(':').collect();
    let usage = || {
        CliError::Usage(format!(
            "bad --param `{param}`; expected eps:<from>:<to>:<points>"
        ))
    };
    if parts.len() != 4 || parts[0] != "eps" {
        return Err(usage());
    }
    let from: f64 = parts[1].parse().map_err(|_| usage())?;
    let to: f64 = parts[2].parse().map_err(|_| usage())?;
    let points: usize = parts[3].parse().map_err(|_| usage())?;
    if points == 0 {
        return Err(usage());
    }
    Ok(SweepSpec { from, to, points })
}

pub fn sweep(
    common: &CommonArgs,
    param: &str,
    predict: Option<&str>,
    prop: &PropagationArgs,
) -> CmdOutcome {
    let (model, perm) = load(&common.model)?;
    let spec = parse_sweep(param)?;
    if let Some(p) = predict {
        if p != "con43" {
            return Err(CliError::Usage(format!("unknown prediction set `{p}`")));
        }
    }

    // The swept parameter is the half-distance of the unique two-level
    // parallel band.
    let groups = model.slope_groups();
    let pairs: Vec<_> = groups.iter().filter(|g| g.len() == 2).collect();
    if pairs.len() != 1 || groups.iter().any(|g| g.len() > 2) {
        return Err(CliError::Usage(
            "sweep needs a model with exactly one two-level parallel band".into(),
        ));
    }
    let band = pairs[0].clone();
    let mid = (model.energies()[band.start] + model.energies()[band.start + 1]) / 2.0;

    let con43 = if predict.is_some() {
        if groups.len() != 3 || model.dimension() != 4 {
            return Err(CliError::Usage(
                "con43 predictions need the 4-level slanted/pair/slanted layout".into(),
            ));
        }
        let pa = band.start;
        let gx = model.coupling(0, pa).norm_sqr();
        let gy = model.coupling(3, pa).norm_sqr();
        let x = (-2.0 * std::f64::consts::PI * gx / (model.slopes()[0] - model.slopes()[pa]).abs())
            .exp();
        let y = (-2.0 * std::f64::consts::PI * gy / (model.slopes()[3] - model.slopes()[pa]).abs())
            .exp();
        Some((x, y))
    } else {
        None
    };

    let mut rep = Report::new();
    preamble(&mut rep, "sweep", common, &model, &perm);
    rep.comment(format!(
        "eps from {} to {} in {} points (pair mid-energy {})",
        num(spec.from),
        num(spec.to),
        spec.points,
        num(mid)
    ));
    if let Some((x, y)) = con43 {
        rep.comment(format!("predict con43 with X {} Y {}", num(x), num(y)));
    }

    let n = model.dimension();
    let mut cols: Vec<String> = vec!["eps".into()];
    for i in 0..n {
        for j in 0..n {
            cols.push(format!("p{}{}", i + 1, j + 1));
        }
    }
    if con43.is_some() {
        for name in [
            "pred32", "pred23", "pred24", "pred43", "pred14", "pred41", "dev",
        ] {
            cols.push(name.into());
        }
    }
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    rep.header(&col_refs);

    let mut worst = 0.0f64;
    for k in 0..spec.points {
        let eps = if spec.points == 1 {
            spec.from
        } else {
            spec.from + (spec.to - spec.from) * (k as f64) / ((spec.points - 1) as f64)
        };
        let mut energies = model.energies().to_vec();
        energies[band.start] = mid + eps;
        energies[band.start + 1] = mid - eps;
        let (m, _) =
            MlzModel::canonicalize(model.slopes().to_vec(), energies, model.couplings().clone())?;
        let cfg = config(&m, prop, None)?;
        let p = transition_matrix(&propagate(&m, &cfg)?);
        let mut row = vec![num(eps)];
        for i in 0..n {
            for j in 0..n {
                row.push(num(p.entry(i, j)));
            }
        }
        if let Some((x, y)) = con43 {
            let pred = pseudo_bowtie_predict(x, y, p.entry(0, 1), p.entry(1, 1));
            let devs = [
                (pred.p32 - p.entry(2, 1)).abs(),
                (pred.p23 - p.entry(1, 2)).abs(),
                (pred.p24 - p.entry(1, 3)).abs(),
                (pred.p43 - p.entry(3, 2)).abs(),
                (pred.p14 - p.entry(0, 3)).abs(),
                (pred.p41 - p.entry(3, 0)).abs(),
            ];
            let dev = devs.iter().cloned().fold(0.0f64, f64::max);
            worst = worst.max(dev);
            for v in [pred.p32, pred.p23, pred.p24, pred.p43, pred.p14, pred.p41] {
                row.push(num(v));
            }
            row.push(num(dev));
        }
        rep.row(&row);
    }

    let mut code = 0;
    if con43.is_some() {
        rep.comment(format!(
            "max-deviation {} (tol {})",
            num(worst),
            num(PREDICT_TOL)
        ));
        if worst >= PREDICT_TOL {
            code = 3;
        }
    }
    Ok((rep.finish(), code))
}
