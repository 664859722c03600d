//! On-disk formats. JSON documents carry a `format` tag and a `version`;
//! bulk numeric tables are CSV. Floats are written in their shortest
//! round-trip form, so reading a file back gives bit-identical values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use dklsynth_core::abstraction::{Abstraction, ActionBounds, Cell, Imdp, Partition, Transition};
use dklsynth_core::dkl::{DeepKernelModel, ModelRecord};
use dklsynth_core::dynamics::{Dataset, LabelSet, Sample};
use dklsynth_core::nn::MlpNetwork;
use dklsynth_core::synthesis::{Dfa, SynthesisResult};
use dklsynth_core::Region;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const VERSION: u32 = 1;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(f)).with_context(|| format!("malformed {}", path.display()))
}

fn check_header(path: &Path, format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        bail!(ConfigError::new(format!("{} is a `{format}` file, expected `{expected}`", path.display())));
    }
    if version != VERSION {
        bail!(ConfigError::new(format!("{} has version {version}, expected {VERSION}", path.display())));
    }
    Ok(())
}

/// `{a,c}` with propositions in index order; `{}` for the empty set.
pub fn label_string(props: &[String], l: LabelSet) -> String {
    let names: Vec<&str> = l.iter().map(|i| props[i].as_str()).collect();
    format!("{{{}}}", names.join(","))
}

pub fn parse_label_string(props: &[String], s: &str) -> Result<LabelSet> {
    let inner = s
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| ConfigError::new(format!("label set `{s}` must be written as {{p,q,...}}")))?;
    let mut l = LabelSet::EMPTY;
    for name in inner.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let i = props.iter().position(|p| p == name).ok_or_else(|| ConfigError::new(format!("unknown proposition `{name}`")))?;
        l = l.union(LabelSet::single(i));
    }
    Ok(l)
}

// ---------------------------------------------------------------- dataset

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub system: String,
    pub actions: Vec<String>,
    pub dim: usize,
    pub per_action: usize,
    pub pred: usize,
    pub seed: u64,
    pub samples: usize,
}

/// CSV with columns `action, x1..xn, next1..nextn, pred`, plus a JSON sidecar.
pub fn write_dataset(csv_path: &Path, meta_path: &Path, ds: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let mut in_pred = vec![false; ds.len()];
    ds.pred.iter().flatten().for_each(|&i| in_pred[i] = true);
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["action".to_string()];
    header.extend((1..=ds.dim).map(|j| format!("x{j}")));
    header.extend((1..=ds.dim).map(|j| format!("next{j}")));
    header.push("pred".into());
    w.write_record(&header)?;
    for (i, s) in ds.samples.iter().enumerate() {
        let mut rec = vec![s.action.to_string()];
        rec.extend(s.state.iter().map(f64::to_string));
        rec.extend(s.next.iter().map(f64::to_string));
        rec.push(u8::from(in_pred[i]).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_json(meta_path, meta)
}

pub fn read_dataset(csv_path: &Path, meta_path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta: DatasetMeta = read_json(meta_path)?;
    check_header(meta_path, &meta.format, meta.version, "dklsynth-dataset")?;
    let n = meta.dim;
    let mut r = csv::Reader::from_path(csv_path).with_context(|| format!("cannot open {}", csv_path.display()))?;
    let mut samples = Vec::new();
    let mut pred = vec![Vec::new(); meta.actions.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 * n + 2 {
            bail!(ConfigError::new(format!("{}: row {} has {} columns", csv_path.display(), i + 1, rec.len())));
        }
        let num = |k: usize| -> Result<f64> { rec[k].parse::<f64>().with_context(|| format!("{}: bad number `{}`", csv_path.display(), &rec[k])) };
        let action: usize = rec[0].parse().with_context(|| format!("{}: bad action `{}`", csv_path.display(), &rec[0]))?;
        let state = (1..=n).map(num).collect::<Result<Vec<_>>>()?;
        let next = (n + 1..=2 * n).map(num).collect::<Result<Vec<_>>>()?;
        if &rec[2 * n + 1] == "1" {
            if action >= pred.len() {
                bail!(ConfigError::new(format!("{}: unknown action {action}", csv_path.display())));
            }
            pred[action].push(i);
        }
        samples.push(Sample { action, state, next });
    }
    let ds = Dataset::from_samples(n, meta.actions.len(), samples, pred)?;
    Ok((ds, meta))
}

// ------------------------------------------------------------------ model

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub system: String,
    pub variant: String,
    pub model: ModelRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetsFile {
    pub format: String,
    pub version: u32,
    pub variant: String,
    /// One network per action; `null` for the plain GP.
    pub nets: Vec<Option<MlpNetwork>>,
}

pub fn write_model(model_path: &Path, nets_path: &Path, system: &str, model: &DeepKernelModel) -> Result<()> {
    let record = model.to_record();
    let variant = model.kind().name().to_string();
    let nets = NetsFile {
        format: "dklsynth-nets".into(),
        version: VERSION,
        variant: variant.clone(),
        nets: record.actions.iter().map(|a| a.net.clone()).collect(),
    };
    write_json(model_path, &ModelFile { format: "dklsynth-model".into(), version: VERSION, system: system.into(), variant, model: record })?;
    write_json(nets_path, &nets)
}

pub fn read_model(path: &Path) -> Result<DeepKernelModel> {
    let f: ModelFile = read_json(path)?;
    check_header(path, &f.format, f.version, "dklsynth-model")?;
    Ok(DeepKernelModel::from_record(f.model)?)
}

pub fn read_nets(path: &Path) -> Result<NetsFile> {
    let f: NetsFile = read_json(path)?;
    check_header(path, &f.format, f.version, "dklsynth-nets")?;
    Ok(f)
}

// -------------------------------------------------------------------- dfa

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfaFile {
    pub format: String,
    pub version: u32,
    pub props: Vec<String>,
    /// Every letter as a label-set string, sorted.
    pub alphabet: Vec<String>,
    pub states: usize,
    pub initial: usize,
    pub accepting: Vec<usize>,
    /// `(from, letter, to)` for every state and letter.
    pub transitions: Vec<(usize, String, usize)>,
}

pub fn dfa_to_file(dfa: &Dfa) -> DfaFile {
    let props = dfa.props().to_vec();
    let letters: Vec<LabelSet> = (0..dfa.num_letters() as u32).map(LabelSet).collect();
    let mut alphabet: Vec<String> = letters.iter().map(|&l| label_string(&props, l)).collect();
    alphabet.sort();
    let transitions = (0..dfa.num_states())
        .flat_map(|s| letters.iter().map(move |&l| (s, l)))
        .map(|(s, l)| (s, label_string(&props, l), dfa.step(s, l)))
        .collect();
    DfaFile {
        format: "dklsynth-dfa".into(),
        version: VERSION,
        props,
        alphabet,
        states: dfa.num_states(),
        initial: dfa.initial(),
        accepting: dfa.accepting(),
        transitions,
    }
}

pub fn dfa_from_file(f: &DfaFile) -> Result<Dfa> {
    let letters = 1usize << f.props.len();
    let mut delta = vec![usize::MAX; f.states * letters];
    for (s, l, t) in &f.transitions {
        let l = parse_label_string(&f.props, l)?;
        if *s >= f.states {
            bail!(ConfigError::new(format!("transition from undeclared state {s}")));
        }
        delta[s * letters + l.0 as usize] = *t;
    }
    if let Some(k) = delta.iter().position(|&t| t == usize::MAX) {
        bail!(ConfigError::new(format!(
            "no transition from state {} on {}",
            k / letters,
            label_string(&f.props, LabelSet((k % letters) as u32))
        )));
    }
    Ok(Dfa::new(f.props.clone(), f.states, f.initial, delta, &f.accepting)?)
}

pub fn write_dfa(path: &Path, dfa: &Dfa) -> Result<()> {
    write_json(path, &dfa_to_file(dfa))
}

pub fn read_dfa(path: &Path) -> Result<Dfa> {
    let f: DfaFile = read_json(path)?;
    check_header(path, &f.format, f.version, "dklsynth-dfa")?;
    dfa_from_file(&f).with_context(|| format!("invalid automaton {}", path.display()))
}

// ------------------------------------------------------------------- imdp

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub labels: String,
}

/// Partition and metadata of an IMDP; the transitions live in a CSV next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImdpHeader {
    pub format: String,
    pub version: u32,
    pub round: usize,
    pub actions: Vec<String>,
    pub props: Vec<String>,
    pub domain: Region,
    pub grid: Vec<usize>,
    pub noise_var: Vec<f64>,
    /// Index of the absorbing unsafe state (equal to the number of cells).
    pub unsafe_state: usize,
    pub cells: Vec<CellRecord>,
    pub transitions: String,
    pub num_transitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsFile {
    pub format: String,
    pub version: u32,
    pub round: usize,
    pub bounds: Vec<Vec<ActionBounds>>,
}

pub fn partition_header(p: &Partition, actions: &[String], noise_var: &[f64], round: usize, csv_name: &str, num_transitions: usize) -> ImdpHeader {
    ImdpHeader {
        format: "dklsynth-imdp".into(),
        version: VERSION,
        round,
        actions: actions.to_vec(),
        props: p.props().to_vec(),
        domain: p.domain().clone(),
        grid: p.grid().to_vec(),
        noise_var: noise_var.to_vec(),
        unsafe_state: p.unsafe_state(),
        cells: p
            .cells()
            .iter()
            .map(|c| CellRecord { lo: c.region.lo.clone(), hi: c.region.hi.clone(), labels: label_string(p.props(), c.labels) })
            .collect(),
        transitions: csv_name.into(),
        num_transitions,
    }
}

/// Header JSON plus a CSV of `q,a,q',lo,hi` rows (cell states only; `q_u`
/// is absorbing).
pub fn write_imdp(header_path: &Path, csv_path: &Path, abs: &Abstraction, actions: &[String], round: usize) -> Result<()> {
    let csv_name = csv_path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let imdp = &abs.imdp;
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["q", "a", "q'", "lo", "hi"])?;
    let mut count = 0;
    for q in 0..imdp.num_cells() {
        for a in 0..imdp.num_actions() {
            for t in imdp.row(q, a) {
                w.write_record([q.to_string(), a.to_string(), t.dest.to_string(), t.lo.to_string(), t.hi.to_string()])?;
                count += 1;
            }
        }
    }
    w.flush()?;
    write_json(header_path, &partition_header(&abs.partition, actions, &abs.noise_var, round, &csv_name, count))
}

pub fn read_partition(header: &ImdpHeader) -> Result<Partition> {
    let cells = header
        .cells
        .iter()
        .map(|c| Ok(Cell { region: Region::new(c.lo.clone(), c.hi.clone())?, labels: parse_label_string(&header.props, &c.labels)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition::from_cells(header.domain.clone(), header.grid.clone(), header.props.clone(), cells)?)
}

pub fn read_imdp(header_path: &Path) -> Result<(ImdpHeader, Partition, Imdp)> {
    let header: ImdpHeader = read_json(header_path)?;
    check_header(header_path, &header.format, header.version, "dklsynth-imdp")?;
    let partition = read_partition(&header)?;
    let csv_path = header_path.with_file_name(&header.transitions);
    let na = header.actions.len();
    let n = partition.num_cells();
    let mut rows = vec![Vec::new(); n * na];
    let mut r = csv::Reader::from_path(&csv_path).with_context(|| format!("cannot open {}", csv_path.display()))?;
    for rec in r.records() {
        let rec = rec?;
        let bad = || ConfigError::new(format!("{}: malformed row {:?}", csv_path.display(), rec));
        if rec.len() != 5 {
            bail!(bad());
        }
        let q: usize = rec[0].parse().map_err(|_| bad())?;
        let a: usize = rec[1].parse().map_err(|_| bad())?;
        let dest: usize = rec[2].parse().map_err(|_| bad())?;
        let lo: f64 = rec[3].parse().map_err(|_| bad())?;
        let hi: f64 = rec[4].parse().map_err(|_| bad())?;
        if q >= n || a >= na || dest > n {
            bail!(bad());
        }
        rows[q * na + a].push(Transition { dest, lo, hi });
    }
    let labels = partition.cells().iter().map(|c| c.labels).collect();
    let imdp = Imdp::new(na, header.props.clone(), labels, rows)?;
    Ok((header, partition, imdp))
}

pub fn write_bounds(path: &Path, bounds: &[Vec<ActionBounds>], round: usize) -> Result<()> {
    write_json(path, &BoundsFile { format: "dklsynth-bounds".into(), version: VERSION, round, bounds: bounds.to_vec() })
}

pub fn read_bounds(path: &Path) -> Result<Vec<Vec<ActionBounds>>> {
    let f: BoundsFile = read_json(path)?;
    check_header(path, &f.format, f.version, "dklsynth-bounds")?;
    Ok(f.bounds)
}

pub fn read_abstraction(header_path: &Path, bounds_path: &Path) -> Result<(ImdpHeader, Abstraction)> {
    let (header, partition, imdp) = read_imdp(header_path)?;
    let bounds = read_bounds(bounds_path)?;
    if bounds.len() != partition.num_cells() {
        bail!(ConfigError::new(format!("{} does not match {}", bounds_path.display(), header_path.display())));
    }
    let noise_var = header.noise_var.clone();
    Ok((header, Abstraction { partition, bounds, imdp, noise_var }))
}

// ----------------------------------------------------------------- result

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentages {
    pub yes: f64,
    pub no: f64,
    pub unknown: f64,
}

impl Percentages {
    pub fn of(result: &SynthesisResult, partition: &Partition) -> Self {
        let fr: Vec<f64> = (0..partition.num_cells()).map(|i| partition.volume_fraction(i)).collect();
        let [yes, no, unknown] = result.class_percentages(&fr);
        Percentages { yes, no, unknown }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format: String,
    pub version: u32,
    pub round: usize,
    pub cells: usize,
    /// Volume percentages of the domain.
    pub percentages: Percentages,
    pub result: SynthesisResult,
}

pub fn write_result(path: &Path, result: &SynthesisResult, partition: &Partition, round: usize) -> Result<Percentages> {
    let percentages = Percentages::of(result, partition);
    write_json(
        path,
        &ResultFile {
            format: "dklsynth-result".into(),
            version: VERSION,
            round,
            cells: partition.num_cells(),
            percentages,
            result: result.clone(),
        },
    )?;
    Ok(percentages)
}

pub fn read_result(path: &Path) -> Result<ResultFile> {
    let f: ResultFile = read_json(path)?;
    check_header(path, &f.format, f.version, "dklsynth-result")?;
    Ok(f)
}

/// One row per cell: `cell_min1..n, cell_max1..n, p_lo, p_hi, class`.
pub fn write_heatmap(path: &Path, result: &SynthesisResult, partition: &Partition) -> Result<()> {
    let n = partition.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=n).map(|j| format!("cell_min{j}")).collect();
    header.extend((1..=n).map(|j| format!("cell_max{j}")));
    header.extend(["p_lo", "p_hi", "class"].map(String::from));
    w.write_record(&header)?;
    for (i, c) in partition.cells().iter().enumerate() {
        let mut rec: Vec<String> = c.region.lo.iter().chain(&c.region.hi).map(f64::to_string).collect();
        rec.push(result.lower[i].to_string());
        rec.push(result.upper[i].to_string());
        rec.push(result.classes[i].name().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- lineage

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub parent: usize,
    pub dim: usize,
    pub children: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub cells: usize,
    pub percentages: Percentages,
    pub iterations: usize,
    /// Splits that produced this round from the previous one.
    pub splits: Vec<SplitRecord>,
    /// Parent (previous-round index) of every cell; empty for round 0.
    pub parents: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub format: String,
    pub version: u32,
    pub rounds: Vec<RoundRecord>,
}

impl Lineage {
    pub fn new() -> Self {
        Lineage { format: "dklsynth-lineage".into(), version: VERSION, rounds: Vec::new() }
    }
}

impl Default for Lineage {
    fn default() -> Self {
        Lineage::new()
    }
}

/// Split records from the parent of every new cell.
pub fn split_records(splits: &[(usize, usize)], parents: &[usize]) -> Vec<SplitRecord> {
    let mut kids: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &p) in parents.iter().enumerate() {
        kids.entry(p).or_default().push(i);
    }
    splits
        .iter()
        .map(|&(parent, dim)| {
            let k = &kids[&parent];
            SplitRecord { parent, dim, children: [k[0], k[1]] }
        })
        .collect()
}

pub fn read_lineage(path: &Path) -> Result<Lineage> {
    let f: Lineage = read_json(path)?;
    check_header(path, &f.format, f.version, "dklsynth-lineage")?;
    Ok(f)
}
