//! JSON experiment description with field-path diagnostics.
//!
//! ```json
//! {
//!   "layout": {"nL": 1, "nS": 1, "nA": 0},
//!   "code": {"type": "repetition", "repeats": 3},
//!   "s_star": "0",
//!   "decoder": {"1": "X"},
//!   "noise": [{"pauli": "X|I||III", "prob": 0.005}],
//!   "randomize_syndrome": false,
//!   "preps": [{"state": "0"}],
//!   "meas": [{"readout": {"type": "decoded", "repeats": 1}}],
//!   "pairs": [[0, 0]],
//!   "outcomes": [["0"], ["1"]]
//! }
//! ```

use std::fmt;
use std::path::Path;

use serde_json::Value;

use crate::cycle::{
    build_linear_code, DecoderTable, ExperimentSettings, LogicalState, MeasSpec, OutcomeSet,
    PrepSpec, QecCycleSpec, Readout, RegisterLayout, SyndromeCode,
};
use crate::error::Error;
use crate::pauli::{BitString, Layout, PauliChannel, PauliLabel};

/// A parse or consistency problem located by its JSON path (`$` is the root).
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::Parse(e.to_string())
    }
}

type Parsed<T> = std::result::Result<T, ConfigError>;

/// Everything a command needs: the cycle, the settings and the outcome sets.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub spec: QecCycleSpec,
    pub settings: ExperimentSettings,
    pub outcomes: Vec<OutcomeSet>,
}

#[derive(Clone, Copy)]
struct Node<'a> {
    value: &'a Value,
    path: &'a str,
}

impl<'a> Node<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Parsed<T> {
        Err(ConfigError {
            path: self.path.to_string(),
            message: message.into(),
        })
    }

    fn wrap<T>(&self, r: crate::Result<T>) -> Parsed<T> {
        r.or_else(|e| self.err(e.to_string()))
    }

    fn object(&self) -> Parsed<&'a serde_json::Map<String, Value>> {
        self.value
            .as_object()
            .map_or_else(|| self.err("expected an object"), Ok)
    }

    fn array(&self) -> Parsed<&'a Vec<Value>> {
        self.value
            .as_array()
            .map_or_else(|| self.err("expected an array"), Ok)
    }

    fn str(&self) -> Parsed<&'a str> {
        self.value
            .as_str()
            .map_or_else(|| self.err("expected a string"), Ok)
    }

    fn usize(&self) -> Parsed<usize> {
        match self.value.as_u64() {
            Some(v) => usize::try_from(v).or_else(|_| self.err("integer too large")),
            None => self.err("expected a non-negative integer"),
        }
    }

    fn f64(&self) -> Parsed<f64> {
        self.value
            .as_f64()
            .map_or_else(|| self.err("expected a number"), Ok)
    }

    fn bool(&self) -> Parsed<bool> {
        self.value
            .as_bool()
            .map_or_else(|| self.err("expected true or false"), Ok)
    }

    fn bits(&self, width: usize) -> Parsed<BitString> {
        let b: BitString = self.wrap(self.str()?.parse())?;
        if b.len() != width {
            return self.err(format!("expected {width} bits, found {}", b.len()));
        }
        Ok(b)
    }
}

fn field<'a>(node: Node<'a>, key: &str) -> Option<(String, &'a Value)> {
    node.value
        .as_object()
        .and_then(|o| o.get(key))
        .map(|v| (format!("{}.{key}", node.path), v))
}

fn index_path(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

macro_rules! node {
    ($value:expr, $path:expr) => {
        Node {
            value: $value,
            path: &$path,
        }
    };
}

fn required<'a>(node: Node<'a>, key: &str) -> Parsed<(String, &'a Value)> {
    node.object()?;
    field(node, key).map_or_else(|| node.err(format!("missing field `{key}`")), Ok)
}

fn check_keys(node: Node<'_>, allowed: &[&str]) -> Parsed<()> {
    for key in node.object()?.keys() {
        if !allowed.contains(&key.as_str()) {
            return node.err(format!(
                "unknown field `{key}` (expected one of {})",
                allowed.join(", ")
            ));
        }
    }
    Ok(())
}

fn parse_code(node: Node<'_>, n_s: usize) -> Parsed<SyndromeCode> {
    let (tp, tv) = required(node, "type")?;
    let kind = node!(tv, tp).str()?;
    match kind {
        "identity" => {
            check_keys(node, &["type"])?;
            Ok(SyndromeCode::identity(n_s))
        }
        "repetition" => {
            check_keys(node, &["type", "repeats"])?;
            let (rp, rv) = required(node, "repeats")?;
            let r = node!(rv, rp);
            let repeats = r.usize()?;
            r.wrap(SyndromeCode::repetition(n_s, repeats))
        }
        "linear" => {
            check_keys(node, &["type", "generator"])?;
            let (gp, gv) = required(node, "generator")?;
            let g = node!(gv, gp);
            let rows = g
                .array()?
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let p = index_path(&gp, i);
                    let bits = node!(row, p).bits(n_s)?;
                    Ok((0..n_s).map(|j| bits.get(j)).collect())
                })
                .collect::<Parsed<Vec<Vec<bool>>>>()?;
            g.wrap(build_linear_code(&rows))
        }
        "table" => {
            check_keys(node, &["type", "encode", "decode"])?;
            let (ep, ev) = required(node, "encode")?;
            let (dp, dv) = required(node, "decode")?;
            let encode_nodes = node!(ev, ep).array()?;
            let first = encode_nodes.first().map(|v| {
                let p = index_path(&ep, 0);
                node!(v, p).str().map(str::len)
            });
            let n_o = match first {
                Some(w) => w?,
                None => return node!(ev, ep).err("encoding table is empty"),
            };
            let encode = encode_nodes
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = index_path(&ep, i);
                    node!(v, p).bits(n_o).map(|b| b.index())
                })
                .collect::<Parsed<Vec<u64>>>()?;
            let decode = node!(dv, dp)
                .array()?
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = index_path(&dp, i);
                    node!(v, p).bits(n_s).map(|b| b.index())
                })
                .collect::<Parsed<Vec<u64>>>()?;
            node.wrap(SyndromeCode::table(n_s, n_o, encode, decode))
        }
        other => node!(tv, tp).err(format!(
            "unknown code type `{other}` (expected identity, repetition, linear or table)"
        )),
    }
}

/// Noise terms; when the identity is not listed it receives the remaining probability.
fn parse_noise(node: Node<'_>, layout: &Layout) -> Parsed<PauliChannel> {
    let mut terms = Vec::new();
    for (i, term) in node.array()?.iter().enumerate() {
        let tp = index_path(node.path, i);
        let t = node!(term, tp);
        check_keys(t, &["pauli", "prob"])?;
        let (pp, pv) = required(t, "pauli")?;
        let pn = node!(pv, pp);
        let label = pn.wrap(PauliLabel::parse(pn.str()?, layout))?;
        let (qp, qv) = required(t, "prob")?;
        let qn = node!(qv, qp);
        let prob = qn.f64()?;
        if !(0.0..=1.0).contains(&prob) {
            return qn.err(format!("probability {prob} is outside [0, 1]"));
        }
        terms.push((label, prob));
    }
    if !terms.iter().any(|(l, _)| l.is_identity()) {
        let rest = 1.0 - terms.iter().map(|(_, p)| p).sum::<f64>();
        if rest < 0.0 {
            return node.err(format!("probabilities sum to {}, more than 1", 1.0 - rest));
        }
        terms.push((PauliLabel::identity(layout), rest));
    }
    node.wrap(PauliChannel::new(layout, terms))
}

fn optional_noise(parent: Node<'_>, layout: &Layout) -> Parsed<PauliChannel> {
    match field(parent, "noise") {
        Some((p, v)) => parse_noise(node!(v, p), layout),
        None => Ok(PauliChannel::identity(layout)),
    }
}

fn parse_decoder(node: Node<'_>, n_s: usize, n_l: usize) -> Parsed<DecoderTable> {
    let one = Layout::single(n_l);
    let mut corrections = vec![PauliLabel::identity(&one); 1 << n_s];
    if let Some(list) = node.value.as_array() {
        if list.len() != corrections.len() {
            return node.err(format!(
                "expected {} corrections, found {}",
                corrections.len(),
                list.len()
            ));
        }
        for (i, v) in list.iter().enumerate() {
            let p = index_path(node.path, i);
            let n = node!(v, p);
            corrections[i] = n.wrap(PauliLabel::parse(n.str()?, &one))?;
        }
    } else {
        for (key, v) in node.object()? {
            let p = format!("{}.{key}", node.path);
            let n = node!(v, p);
            let key_value = Value::String(key.clone());
            let s = node!(&key_value, p).bits(n_s)?;
            corrections[s.index() as usize] = n.wrap(PauliLabel::parse(n.str()?, &one))?;
        }
    }
    node.wrap(DecoderTable::new(n_s, n_l, corrections))
}

fn parse_state(node: Node<'_>, n_l: usize) -> Parsed<LogicalState> {
    match (field(node, "state"), field(node, "expectations")) {
        (Some(_), Some(_)) => node.err("give either `state` or `expectations`, not both"),
        (Some((p, v)), None) => Ok(LogicalState::basis(&node!(v, p).bits(n_l)?)),
        (None, Some((p, v))) => {
            let e = node!(v, p);
            let one = Layout::single(n_l);
            let mut values = vec![0.0; 1 << (2 * n_l)];
            values[0] = 1.0;
            for (key, value) in e.object()? {
                let kp = format!("{p}.{key}");
                let label = node!(value, kp).wrap(PauliLabel::parse(key, &one))?;
                values[label.table_index()] = node!(value, kp).f64()?;
            }
            e.wrap(LogicalState::from_expectations(n_l, values))
        }
        (None, None) => Ok(LogicalState::basis(&BitString::zeros(n_l))),
    }
}

fn parse_readout(node: Node<'_>) -> Parsed<Readout> {
    check_keys(node, &["type", "repeats"])?;
    let (tp, tv) = required(node, "type")?;
    match node!(tv, tp).str()? {
        "decoded" => {
            let repeats = match field(node, "repeats") {
                Some((p, v)) => node!(v, p).usize()?,
                None => 1,
            };
            if repeats == 0 {
                return node.err("repeats must be at least 1");
            }
            Ok(Readout::Decoded { repeats })
        }
        other => node!(tv, tp).err(format!("unknown readout type `{other}` (expected decoded)")),
    }
}

const TOP_KEYS: [&str; 11] = [
    "layout",
    "code",
    "s_star",
    "decoder",
    "noise",
    "randomize_syndrome",
    "preps",
    "meas",
    "pairs",
    "outcomes",
    "description",
];

/// Parses an experiment description; syntax errors report line and column.
pub fn parse_experiment(text: &str) -> Parsed<Experiment> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError {
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let root_path = String::from("$");
    let root = node!(&value, root_path);
    check_keys(root, &TOP_KEYS)?;

    let (lp, lv) = required(root, "layout")?;
    let lnode = node!(lv, lp);
    check_keys(lnode, &["nL", "nS", "nA", "nO"])?;
    let get = |key: &str| -> Parsed<usize> {
        let (p, v) = required(lnode, key)?;
        node!(v, p).usize()
    };
    let (n_l, n_s) = (get("nL")?, get("nS")?);
    let n_a = match field(lnode, "nA") {
        Some((p, v)) => node!(v, p).usize()?,
        None => 0,
    };

    let code = match field(root, "code") {
        Some((p, v)) => parse_code(node!(v, p), n_s)?,
        None => SyndromeCode::identity(n_s),
    };
    if let Some((p, v)) = field(lnode, "nO") {
        let declared = node!(v, p).usize()?;
        if declared != code.n_o() {
            return node!(v, p).err(format!(
                "code produces {} outcome bits, layout declares {declared}",
                code.n_o()
            ));
        }
    }
    let layout = lnode.wrap(RegisterLayout::new(n_l, n_s, n_a, code.n_o()))?;

    let s_star = match field(root, "s_star") {
        Some((p, v)) => node!(v, p).bits(n_s)?,
        None => BitString::zeros(n_s),
    };
    let decoder = match field(root, "decoder") {
        Some((p, v)) => parse_decoder(node!(v, p), n_s, n_l)?,
        None => DecoderTable::trivial(n_s, n_l),
    };
    let noise = optional_noise(root, &layout.noise_layout())?;
    let randomize_syndrome = match field(root, "randomize_syndrome") {
        Some((p, v)) => node!(v, p).bool()?,
        None => false,
    };
    let spec = QecCycleSpec {
        layout,
        code,
        decoder,
        s_star,
        noise,
        randomize_syndrome,
    };

    let preps = match field(root, "preps") {
        Some((pp, pv)) => node!(pv, pp)
            .array()?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let p = index_path(&pp, i);
                let n = node!(v, p);
                check_keys(n, &["state", "expectations", "noise", "absorb_first_cycle"])?;
                let absorb_first_cycle = match field(n, "absorb_first_cycle") {
                    Some((ap, av)) => node!(av, ap).bool()?,
                    None => false,
                };
                Ok(PrepSpec {
                    sigma: parse_state(n, n_l)?,
                    noise: optional_noise(n, &layout.prep_layout())?,
                    absorb_first_cycle,
                })
            })
            .collect::<Parsed<Vec<_>>>()?,
        None => vec![PrepSpec::noiseless(
            LogicalState::basis(&BitString::zeros(n_l)),
            &layout,
        )],
    };
    let meas = match field(root, "meas") {
        Some((mp, mv)) => node!(mv, mp)
            .array()?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let p = index_path(&mp, i);
                let n = node!(v, p);
                check_keys(n, &["readout", "noise"])?;
                let readout = match field(n, "readout") {
                    Some((rp, rv)) => parse_readout(node!(rv, rp))?,
                    None => Readout::Decoded { repeats: 1 },
                };
                let width = readout.width(&layout);
                let m = MeasSpec {
                    noise: optional_noise(n, &layout.meas_layout(width))?,
                    readout,
                };
                n.wrap(m.check(&layout))?;
                Ok(m)
            })
            .collect::<Parsed<Vec<_>>>()?,
        None => vec![MeasSpec::noiseless(&layout)],
    };
    if preps.is_empty() || meas.is_empty() {
        return root.err("at least one preparation and one measurement are required");
    }
    let settings = match field(root, "pairs") {
        Some((pp, pv)) => {
            let n = node!(pv, pp);
            let pairs = n
                .array()?
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = index_path(&pp, i);
                    let pair = node!(v, p);
                    match pair.array()?.as_slice() {
                        [a, b] => Ok((node!(a, p).usize()?, node!(b, p).usize()?)),
                        _ => pair.err("expected [prep, meas]"),
                    }
                })
                .collect::<Parsed<Vec<_>>>()?;
            n.wrap(ExperimentSettings::new(preps, meas, pairs))?
        }
        None => root.wrap(ExperimentSettings::all_pairs(preps, meas))?,
    };
    let outcomes = match field(root, "outcomes") {
        Some((op, ov)) => node!(ov, op)
            .array()?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let p = index_path(&op, i);
                node!(v, p)
                    .array()?
                    .iter()
                    .enumerate()
                    .map(|(j, b)| {
                        let bp = index_path(&p, j);
                        node!(b, bp).bits(n_l)
                    })
                    .collect::<Parsed<OutcomeSet>>()
            })
            .collect::<Parsed<Vec<_>>>()?,
        None => BitString::all(n_l).map(|b| vec![b]).collect(),
    };
    Ok(Experiment {
        spec,
        settings,
        outcomes,
    })
}

/// Reads and parses an experiment file.
pub fn load_experiment(path: &Path) -> Parsed<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_experiment(&text)
}
