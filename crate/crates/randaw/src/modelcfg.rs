//! TOML model documents: uncertain parameters, derived quantities and
//! plant/controller matrices whose entries are numbers or expressions.
//!
//! ```toml
//! format_version = 1
//!
//! [parameters]
//! a = { distribution = "gaussian", nominal = -1.0, std_rel = 0.2 }
//!
//! [derived]
//! a2 = "a^2"
//!
//! [plant]
//! A_p = [["a"]]
//! B_pu = [[1]]
//! C_py = [[1]]
//! C_pz = [[-1]]
//! D_pzw = [[1]]
//!
//! [controller]
//! A_c = [[0]]
//! B_cy = [[-1]]
//! B_cw = [[1]]
//! C_c = [[1]]
//! D_cy = [[-1]]
//! D_cw = [[1]]
//!
//! [saturation]
//! u_bar = [1]
//! ```
//!
//! `B_pw`, `D_pyu`, `D_pyw`, `D_pzu` and `D_pzw` default to zero matrices of
//! the inferred size.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use randaw_core::antiwindup::{
    assemble_closed_loop, AntiWindupError, ClosedLoopModel, ControllerModel, PlantModel, SaturationLimits,
};
use randaw_core::expr::{EvalError, Expr};
use randaw_core::Mat;
use serde::Deserialize;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid model:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("{at}: {entry}: {source}")]
    Eval {
        at: SampleLabel,
        entry: String,
        #[source]
        source: EvalError,
    },
    #[error("{at}: {source}")]
    Model {
        at: SampleLabel,
        #[source]
        source: AntiWindupError,
    },
}

/// Which parameter vector an evaluation used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleLabel {
    Nominal,
    Index(u64),
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleLabel::Nominal => f.write_str("nominal"),
            SampleLabel::Index(i) => write!(f, "sample {i}"),
        }
    }
}

/// Columns of an empirical data file, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalTable {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl EmpiricalTable {
    pub fn read(path: &Path) -> Result<Self, String> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let columns: Vec<String> =
            reader.headers().map_err(|e| format!("{}: {e}", path.display()))?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
            let row = record
                .iter()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| format!("{}: row {} has a non-numeric entry", path.display(), line + 1))?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(format!("{}: no data rows", path.display()));
        }
        Ok(Self { path: path.to_owned(), columns, rows })
    }

    pub fn column_mean(&self, column: usize) -> f64 {
        self.rows.iter().map(|r| r[column]).sum::<f64>() / self.rows.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    /// Normal distribution; `truncate` limits draws to `mean ± truncate·std`.
    Gaussian {
        mean: f64,
        std: f64,
        truncate: Option<f64>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Fixed,
    /// A column of an empirical table. Parameters sharing a table draw the
    /// same row.
    Empirical {
        table: Arc<EmpiricalTable>,
        column: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub nominal: f64,
    pub distribution: Distribution,
}

/// A matrix entry: a number or an expression over parameters and derived
/// quantities.
#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Value(f64),
    Expr(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixTemplate {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub entries: Vec<Entry>,
}

impl MatrixTemplate {
    fn zeros(name: &'static str, rows: usize, cols: usize) -> Self {
        Self { name, rows, cols, entries: vec![Entry::Value(0.0); rows * cols] }
    }

    fn is_constant(&self) -> bool {
        self.entries.iter().all(|e| matches!(e, Entry::Value(_)))
    }

    fn evaluate(&self, scope: &Scope<'_>, section: &str, at: SampleLabel) -> Result<Mat, ModelError> {
        let mut values = Vec::with_capacity(self.entries.len());
        for (k, entry) in self.entries.iter().enumerate() {
            let v = match entry {
                Entry::Value(v) => *v,
                Entry::Expr(e) => e.eval(&|id| scope.get(id)).map_err(|source| ModelError::Eval {
                    at,
                    entry: format!("{section}.{}[{}][{}]", self.name, k / self.cols, k % self.cols),
                    source,
                })?,
            };
            values.push(v);
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &values))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantTemplate {
    pub a_p: MatrixTemplate,
    pub b_pu: MatrixTemplate,
    pub b_pw: MatrixTemplate,
    pub c_py: MatrixTemplate,
    pub d_pyu: MatrixTemplate,
    pub d_pyw: MatrixTemplate,
    pub c_pz: MatrixTemplate,
    pub d_pzu: MatrixTemplate,
    pub d_pzw: MatrixTemplate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerTemplate {
    pub a_c: MatrixTemplate,
    pub b_cy: MatrixTemplate,
    pub b_cw: MatrixTemplate,
    pub c_c: MatrixTemplate,
    pub d_cy: MatrixTemplate,
    pub d_cw: MatrixTemplate,
}

impl PlantTemplate {
    fn matrices(&self) -> [&MatrixTemplate; 9] {
        [&self.a_p, &self.b_pu, &self.b_pw, &self.c_py, &self.d_pyu, &self.d_pyw, &self.c_pz, &self.d_pzu, &self.d_pzw]
    }
}

impl ControllerTemplate {
    fn matrices(&self) -> [&MatrixTemplate; 6] {
        [&self.a_c, &self.b_cy, &self.b_cw, &self.c_c, &self.d_cy, &self.d_cw]
    }
}

/// A validated model document.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertainModel {
    pub name: Option<String>,
    pub parameters: Vec<Parameter>,
    /// Derived quantities in evaluation order.
    pub derived: Vec<(String, Expr)>,
    pub plant: PlantTemplate,
    pub controller: ControllerTemplate,
    pub limits: SaturationLimits,
}

/// Numeric plant and controller for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInstance {
    pub plant: PlantModel,
    pub controller: ControllerModel,
}

struct Scope<'a> {
    values: HashMap<&'a str, f64>,
}

impl Scope<'_> {
    fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }
}

impl UncertainModel {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text, path.parent()).map_err(|e| match e {
            ModelError::Syntax { message, .. } => ModelError::Syntax { path: path.to_owned(), message },
            other => other,
        })
    }

    /// Parses a document. Empirical data files are resolved relative to
    /// `base_dir` when given.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self, ModelError> {
        let doc: Document = toml::from_str(text)
            .map_err(|e| ModelError::Syntax { path: PathBuf::from("<model>"), message: e.to_string() })?;
        build(doc, base_dir)
    }

    pub fn parameter_names(&self) -> impl Iterator<Item = &str> {
        self.parameters.iter().map(|p| p.name.as_str())
    }

    pub fn nominal_values(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.nominal).collect()
    }

    pub fn n_xp(&self) -> usize {
        self.plant.a_p.rows
    }
    pub fn n_xc(&self) -> usize {
        self.controller.a_c.rows
    }
    pub fn n_u(&self) -> usize {
        self.plant.b_pu.cols
    }
    pub fn n_w(&self) -> usize {
        self.plant.b_pw.cols
    }

    /// True when every parameter is fixed (or the model uses none).
    pub fn is_deterministic(&self) -> bool {
        self.parameters.iter().all(|p| match &p.distribution {
            Distribution::Fixed => true,
            Distribution::Gaussian { std, .. } => *std == 0.0,
            Distribution::Uniform { low, high } => low == high,
            Distribution::Empirical { .. } => false,
        })
    }

    /// Evaluates the model at a parameter vector ordered as
    /// [`UncertainModel::parameters`].
    pub fn instance(&self, values: &[f64], at: SampleLabel) -> Result<ModelInstance, ModelError> {
        assert_eq!(values.len(), self.parameters.len(), "one value per parameter");
        let mut scope = Scope { values: HashMap::with_capacity(self.parameters.len() + self.derived.len()) };
        for (p, v) in self.parameters.iter().zip(values) {
            scope.values.insert(&p.name, *v);
        }
        for (name, e) in &self.derived {
            let v = e.eval(&|id| scope.get(id)).map_err(|source| ModelError::Eval {
                at,
                entry: format!("derived.{name}"),
                source,
            })?;
            scope.values.insert(name, v);
        }
        let p = &self.plant;
        let plant = PlantModel {
            a_p: p.a_p.evaluate(&scope, "plant", at)?,
            b_pu: p.b_pu.evaluate(&scope, "plant", at)?,
            b_pw: p.b_pw.evaluate(&scope, "plant", at)?,
            c_py: p.c_py.evaluate(&scope, "plant", at)?,
            d_pyu: p.d_pyu.evaluate(&scope, "plant", at)?,
            d_pyw: p.d_pyw.evaluate(&scope, "plant", at)?,
            c_pz: p.c_pz.evaluate(&scope, "plant", at)?,
            d_pzu: p.d_pzu.evaluate(&scope, "plant", at)?,
            d_pzw: p.d_pzw.evaluate(&scope, "plant", at)?,
        };
        let c = &self.controller;
        let controller = ControllerModel {
            a_c: c.a_c.evaluate(&scope, "controller", at)?,
            b_cy: c.b_cy.evaluate(&scope, "controller", at)?,
            b_cw: c.b_cw.evaluate(&scope, "controller", at)?,
            c_c: c.c_c.evaluate(&scope, "controller", at)?,
            d_cy: c.d_cy.evaluate(&scope, "controller", at)?,
            d_cw: c.d_cw.evaluate(&scope, "controller", at)?,
        };
        Ok(ModelInstance { plant, controller })
    }

    pub fn nominal_instance(&self) -> Result<ModelInstance, ModelError> {
        self.instance(&self.nominal_values(), SampleLabel::Nominal)
    }

    pub fn closed_loop(&self, values: &[f64], at: SampleLabel) -> Result<ClosedLoopModel, ModelError> {
        let inst = self.instance(values, at)?;
        assemble_closed_loop(&inst.plant, &inst.controller).map_err(|source| ModelError::Model { at, source })
    }

    pub fn nominal_closed_loop(&self) -> Result<ClosedLoopModel, ModelError> {
        self.closed_loop(&self.nominal_values(), SampleLabel::Nominal)
    }
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    name: Option<String>,
    #[serde(default)]
    parameters: BTreeMap<String, ParameterDoc>,
    #[serde(default)]
    derived: BTreeMap<String, String>,
    plant: BTreeMap<String, MatrixDoc>,
    controller: BTreeMap<String, MatrixDoc>,
    saturation: SaturationDoc,
}

#[derive(Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase", deny_unknown_fields)]
enum ParameterDoc {
    Gaussian { nominal: f64, std: Option<f64>, std_rel: Option<f64>, truncate: Option<f64> },
    Uniform { low: f64, high: f64, nominal: Option<f64> },
    Fixed { nominal: f64 },
    Empirical { file: PathBuf, column: Option<String>, nominal: Option<f64> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EntryDoc {
    Number(f64),
    Text(String),
}

type MatrixDoc = Vec<Vec<EntryDoc>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SaturationDoc {
    u_bar: Vec<f64>,
}

const PLANT_KEYS: [&str; 9] = ["A_p", "B_pu", "B_pw", "C_py", "D_pyu", "D_pyw", "C_pz", "D_pzu", "D_pzw"];
const CONTROLLER_KEYS: [&str; 6] = ["A_c", "B_cy", "B_cw", "C_c", "D_cy", "D_cw"];
const OPTIONAL_PLANT_KEYS: [&str; 5] = ["B_pw", "D_pyu", "D_pyw", "D_pzu", "D_pzw"];

/// Collects every problem found while validating a document.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }
}

fn build(doc: Document, base_dir: Option<&Path>) -> Result<UncertainModel, ModelError> {
    let mut problems = Problems::default();
    if doc.format_version != FORMAT_VERSION {
        problems.push(format!("format_version {} is not supported (expected {FORMAT_VERSION})", doc.format_version));
    }

    let parameters = build_parameters(&doc.parameters, base_dir, &mut problems);
    let mut known: BTreeSet<String> = parameters.iter().map(|p| p.name.clone()).collect();
    let derived = build_derived(&doc.derived, &known, &mut problems);
    known.extend(derived.iter().map(|(n, _)| n.clone()));

    for key in doc.plant.keys().filter(|k| !PLANT_KEYS.contains(&k.as_str())) {
        problems.push(format!("plant.{key}: unknown matrix"));
    }
    for key in doc.controller.keys().filter(|k| !CONTROLLER_KEYS.contains(&k.as_str())) {
        problems.push(format!("controller.{key}: unknown matrix"));
    }

    let mut parse = |section: &str, name: &'static str, rows: &MatrixDoc| -> Option<MatrixTemplate> {
        parse_matrix(section, name, rows, &known, &mut problems)
    };
    let plant_raw: Vec<Option<MatrixTemplate>> =
        PLANT_KEYS.iter().map(|k| doc.plant.get(*k).and_then(|m| parse("plant", k, m))).collect();
    let ctrl_raw: Vec<Option<MatrixTemplate>> =
        CONTROLLER_KEYS.iter().map(|k| doc.controller.get(*k).and_then(|m| parse("controller", k, m))).collect();

    for (key, m) in PLANT_KEYS.iter().zip(&plant_raw) {
        if m.is_none() && !OPTIONAL_PLANT_KEYS.contains(key) && !doc.plant.contains_key(*key) {
            problems.push(format!("plant.{key}: missing"));
        }
    }
    for (key, m) in CONTROLLER_KEYS.iter().zip(&ctrl_raw) {
        if m.is_none() && !doc.controller.contains_key(*key) {
            problems.push(format!("controller.{key}: missing"));
        }
    }

    let limits = match SaturationLimits::new(doc.saturation.u_bar.clone()) {
        Ok(l) => Some(l),
        Err(e) => {
            problems.push(format!("saturation.u_bar: {e}"));
            None
        }
    };

    let templates = if problems.0.is_empty() { assemble_templates(plant_raw, ctrl_raw, &mut problems) } else { None };
    if let Some(l) = &limits {
        if let Some((p, _)) = &templates {
            let p: &PlantTemplate = p;
            if l.len() != p.b_pu.cols {
                problems.push(format!("saturation.u_bar: {} limits for {} inputs", l.len(), p.b_pu.cols));
            }
        }
    }
    if !problems.0.is_empty() {
        return Err(ModelError::Invalid(problems.0));
    }
    let (plant, controller) = templates.expect("templates exist when no problems were recorded");
    let model = UncertainModel { name: doc.name, parameters, derived, plant, controller, limits: limits.unwrap() };

    // Dimension checks and a nominal evaluation catch everything that only
    // shows up with numbers in place.
    let inst = model.nominal_instance().map_err(|e| ModelError::Invalid(vec![e.to_string()]))?;
    inst.plant.validate().map_err(|e| ModelError::Invalid(vec![format!("plant: {e}")]))?;
    inst.controller
        .validate(inst.plant.n_u(), inst.plant.n_w(), inst.plant.n_y())
        .map_err(|e| ModelError::Invalid(vec![format!("controller: {e}")]))?;
    Ok(model)
}

fn build_parameters(
    docs: &BTreeMap<String, ParameterDoc>,
    base_dir: Option<&Path>,
    problems: &mut Problems,
) -> Vec<Parameter> {
    let mut tables: BTreeMap<PathBuf, Arc<EmpiricalTable>> = BTreeMap::new();
    let mut out = Vec::with_capacity(docs.len());
    for (name, doc) in docs {
        if !is_identifier(name) {
            problems.push(format!("parameters.{name}: not a valid identifier"));
            continue;
        }
        let at = format!("parameters.{name}");
        let param = match doc {
            ParameterDoc::Gaussian { nominal, std, std_rel, truncate } => {
                let std = match (std, std_rel) {
                    (Some(s), None) => *s,
                    (None, Some(r)) => r * nominal.abs(),
                    (None, None) => {
                        problems.push(format!("{at}: gaussian needs `std` or `std_rel`"));
                        continue;
                    }
                    (Some(_), Some(_)) => {
                        problems.push(format!("{at}: give either `std` or `std_rel`, not both"));
                        continue;
                    }
                };
                if !(std >= 0.0 && std.is_finite()) || !nominal.is_finite() {
                    problems.push(format!("{at}: mean and standard deviation must be finite, std >= 0"));
                    continue;
                }
                if let Some(t) = truncate {
                    if !(*t > 0.0) {
                        problems.push(format!("{at}: truncate must be positive"));
                        continue;
                    }
                }
                Parameter {
                    name: name.clone(),
                    nominal: *nominal,
                    distribution: Distribution::Gaussian { mean: *nominal, std, truncate: *truncate },
                }
            }
            ParameterDoc::Uniform { low, high, nominal } => {
                if !(low <= high) || !low.is_finite() || !high.is_finite() {
                    problems.push(format!("{at}: uniform needs finite low <= high"));
                    continue;
                }
                let nominal = nominal.unwrap_or(0.5 * (low + high));
                Parameter {
                    name: name.clone(),
                    nominal,
                    distribution: Distribution::Uniform { low: *low, high: *high },
                }
            }
            ParameterDoc::Fixed { nominal } => {
                Parameter { name: name.clone(), nominal: *nominal, distribution: Distribution::Fixed }
            }
            ParameterDoc::Empirical { file, column, nominal } => {
                let path = match base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let table = match tables.get(&path) {
                    Some(t) => t.clone(),
                    None => match EmpiricalTable::read(&path) {
                        Ok(t) => {
                            let t = Arc::new(t);
                            tables.insert(path.clone(), t.clone());
                            t
                        }
                        Err(e) => {
                            problems.push(format!("{at}: {e}"));
                            continue;
                        }
                    },
                };
                let col_name = column.as_deref().unwrap_or(name);
                let Some(col) = table.columns.iter().position(|c| c == col_name) else {
                    problems.push(format!("{at}: column `{col_name}` not found in {}", path.display()));
                    continue;
                };
                let nominal = nominal.unwrap_or_else(|| table.column_mean(col));
                Parameter { name: name.clone(), nominal, distribution: Distribution::Empirical { table, column: col } }
            }
        };
        out.push(param);
    }
    out
}

/// Parses derived quantities and orders them so every one is evaluated after
/// its dependencies.
fn build_derived(
    docs: &BTreeMap<String, String>,
    params: &BTreeSet<String>,
    problems: &mut Problems,
) -> Vec<(String, Expr)> {
    let mut parsed: BTreeMap<&str, Expr> = BTreeMap::new();
    for (name, text) in docs {
        if !is_identifier(name) {
            problems.push(format!("derived.{name}: not a valid identifier"));
        } else if params.contains(name) {
            problems.push(format!("derived.{name}: shadows a parameter"));
        } else {
            match Expr::parse(text) {
                Ok(e) => {
                    parsed.insert(name, e);
                }
                Err(e) => problems.push(format!("derived.{name}: {e}")),
            }
        }
    }
    for (name, e) in &parsed {
        for id in e.identifiers() {
            if !params.contains(&id) && !parsed.contains_key(id.as_str()) && docs.get(&id).is_none() {
                problems.push(format!("derived.{name}: undeclared identifier `{id}`"));
            }
        }
    }

    // Kahn's algorithm; BTreeMap iteration keeps the order deterministic.
    let mut pending: BTreeMap<&str, BTreeSet<String>> = parsed
        .iter()
        .map(|(n, e)| (*n, e.identifiers().into_iter().filter(|id| parsed.contains_key(id.as_str())).collect()))
        .collect();
    let mut order = Vec::with_capacity(parsed.len());
    loop {
        let ready: Vec<&str> = pending.iter().filter(|(_, deps)| deps.is_empty()).map(|(n, _)| *n).collect();
        if ready.is_empty() {
            break;
        }
        for n in ready {
            pending.remove(n);
            for deps in pending.values_mut() {
                deps.remove(n);
            }
            order.push((n.to_owned(), parsed[n].clone()));
        }
    }
    if !pending.is_empty() {
        let names: Vec<&str> = pending.keys().copied().collect();
        problems.push(format!("derived: dependency cycle among {}", names.join(", ")));
    }
    order
}

fn parse_matrix(
    section: &str,
    name: &'static str,
    rows: &MatrixDoc,
    known: &BTreeSet<String>,
    problems: &mut Problems,
) -> Option<MatrixTemplate> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    let mut ok = true;
    if n_rows == 0 || n_cols == 0 {
        problems.push(format!("{section}.{name}: empty matrix"));
        return None;
    }
    let mut entries = Vec::with_capacity(n_rows * n_cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_cols {
            problems.push(format!("{section}.{name}[{i}]: {} entries, expected {n_cols}", row.len()));
            ok = false;
            continue;
        }
        for (j, e) in row.iter().enumerate() {
            let loc = || format!("{section}.{name}[{i}][{j}]");
            match e {
                EntryDoc::Number(v) if v.is_finite() => entries.push(Entry::Value(*v)),
                EntryDoc::Number(_) => {
                    problems.push(format!("{}: entry is not finite", loc()));
                    ok = false;
                }
                EntryDoc::Text(t) => match Expr::parse(t) {
                    Ok(expr) => {
                        for id in expr.identifiers() {
                            if !known.contains(&id) {
                                problems.push(format!("{}: undeclared identifier `{id}`", loc()));
                                ok = false;
                            }
                        }
                        entries.push(match expr {
                            Expr::Num(v) => Entry::Value(v),
                            other => Entry::Expr(other),
                        });
                    }
                    Err(err) => {
                        problems.push(format!("{}: {err}", loc()));
                        ok = false;
                    }
                },
            }
        }
    }
    ok.then_some(MatrixTemplate { name, rows: n_rows, cols: n_cols, entries })
}

fn assemble_templates(
    plant: Vec<Option<MatrixTemplate>>,
    ctrl: Vec<Option<MatrixTemplate>>,
    problems: &mut Problems,
) -> Option<(PlantTemplate, ControllerTemplate)> {
    let mut plant = plant.into_iter();
    let mut next_plant = || plant.next().expect("nine plant slots");
    let (a_p, b_pu, b_pw, c_py, d_pyu, d_pyw, c_pz, d_pzu, d_pzw) = (
        next_plant()?,
        next_plant()?,
        next_plant(),
        next_plant()?,
        next_plant(),
        next_plant(),
        next_plant()?,
        next_plant(),
        next_plant(),
    );
    let mut ctrl = ctrl.into_iter();
    let mut next_ctrl = || ctrl.next().expect("six controller slots").expect("checked as present");
    let controller = ControllerTemplate {
        a_c: next_ctrl(),
        b_cy: next_ctrl(),
        b_cw: next_ctrl(),
        c_c: next_ctrl(),
        d_cy: next_ctrl(),
        d_cw: next_ctrl(),
    };

    let (n_u, n_y, n_z) = (b_pu.cols, c_py.rows, c_pz.rows);
    let n_w = [b_pw.as_ref().map(|m| m.cols), d_pyw.as_ref().map(|m| m.cols), d_pzw.as_ref().map(|m| m.cols)]
        .into_iter()
        .flatten()
        .next()
        .unwrap_or(controller.b_cw.cols);
    let n_xp = a_p.rows;
    let plant = PlantTemplate {
        b_pw: b_pw.unwrap_or_else(|| MatrixTemplate::zeros("B_pw", n_xp, n_w)),
        d_pyu: d_pyu.unwrap_or_else(|| MatrixTemplate::zeros("D_pyu", n_y, n_u)),
        d_pyw: d_pyw.unwrap_or_else(|| MatrixTemplate::zeros("D_pyw", n_y, n_w)),
        d_pzu: d_pzu.unwrap_or_else(|| MatrixTemplate::zeros("D_pzu", n_z, n_u)),
        d_pzw: d_pzw.unwrap_or_else(|| MatrixTemplate::zeros("D_pzw", n_z, n_w)),
        a_p,
        b_pu,
        c_py,
        c_pz,
    };

    let before = problems.0.len();
    let n_xc = controller.a_c.rows;
    let expect = |m: &MatrixTemplate, section: &str, shape: (usize, usize), problems: &mut Problems| {
        if (m.rows, m.cols) != shape {
            problems
                .push(format!("{section}.{}: expected {}x{}, found {}x{}", m.name, shape.0, shape.1, m.rows, m.cols));
        }
    };
    let shapes_p = [
        (n_xp, n_xp),
        (n_xp, n_u),
        (n_xp, n_w),
        (n_y, n_xp),
        (n_y, n_u),
        (n_y, n_w),
        (n_z, n_xp),
        (n_z, n_u),
        (n_z, n_w),
    ];
    for (m, shape) in plant.matrices().into_iter().zip(shapes_p) {
        expect(m, "plant", shape, problems);
    }
    let shapes_c = [(n_xc, n_xc), (n_xc, n_y), (n_xc, n_w), (n_u, n_xc), (n_u, n_y), (n_u, n_w)];
    for (m, shape) in controller.matrices().into_iter().zip(shapes_c) {
        expect(m, "controller", shape, problems);
    }
    (problems.0.len() == before).then_some((plant, controller))
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl UncertainModel {
    /// True if no matrix entry depends on parameters.
    pub fn has_constant_matrices(&self) -> bool {
        self.plant.matrices().iter().all(|m| m.is_constant())
            && self.controller.matrices().iter().all(|m| m.is_constant())
    }
}
