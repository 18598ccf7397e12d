//! Sequence model over (SEI, goal, start, path history) that predicts the
//! next sampling node, plus attention extraction and normalization.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eise::{encode, EnvVector, SemanticEncoding};
use crate::error::{Error, Result};
use crate::model::{BoundParams, ModelBundle, ModelConfig, ROLE_COUNT};
use crate::nn::{ffn, layer_norm, linear, multi_head_attention, HeadVars, Tape, Var};
use crate::sbmp::Path;
use crate::scalar::Real;
use crate::world::{PlanningTask, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenRole {
    Sei,
    Goal,
    Start,
    Hpd,
}

impl TokenRole {
    pub const ALL: [TokenRole; 4] = [TokenRole::Sei, TokenRole::Goal, TokenRole::Start, TokenRole::Hpd];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenRole::Sei => "SEI",
            TokenRole::Goal => "GOAL",
            TokenRole::Start => "START",
            TokenRole::Hpd => "HPD",
        }
    }
}

impl fmt::Display for TokenRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model input before embedding. States are in normalized coordinates;
/// `states[0]` is the START token and the rest are path history.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence<T> {
    pub sei: Vec<T>,
    pub goal: Vec<T>,
    pub states: Vec<Vec<T>>,
    /// Index into the source path of `states[1]` (equals the path length
    /// when there is no history).
    pub first_hpd_path_index: usize,
}

impl<T: Real> TokenSequence<T> {
    pub fn len(&self) -> usize {
        2 + self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hpd_count(&self) -> usize {
        self.states.len() - 1
    }

    pub fn roles(&self) -> Vec<TokenRole> {
        let mut roles = vec![TokenRole::Sei, TokenRole::Goal, TokenRole::Start];
        roles.extend(std::iter::repeat_n(TokenRole::Hpd, self.hpd_count()));
        roles
    }
}

/// Builds the token sequence for a root-to-tip path, keeping START and the
/// most recent `max_seq_len - 3` history states when the path is too long.
pub fn tokenize<T: Real>(
    sei: &SemanticEncoding<T>,
    task: &PlanningTask<T>,
    sigma_prime: &Path<T>,
    max_seq_len: usize,
) -> Result<TokenSequence<T>> {
    let ws = &task.workspace;
    let states = &sigma_prime.states;
    if states[0].dim() != ws.dim() {
        return Err(Error::invalid("path dimension does not match the workspace"));
    }
    let normalized: Vec<Vec<T>> = states.iter().map(|s| ws.normalize(s)).collect();
    TokenSequence::from_normalized(sei.values.clone(), ws.normalize(&task.goal_center), &normalized, max_seq_len)
}

impl<T: Real> TokenSequence<T> {
    /// Sequence from already normalized goal and path states, with the same
    /// truncation rule as [`tokenize`].
    pub fn from_normalized(sei: Vec<T>, goal: Vec<T>, path: &[Vec<T>], max_seq_len: usize) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::invalid("path must contain at least the start state"));
        }
        if max_seq_len < 3 {
            return Err(Error::invalid("max_seq_len must be at least 3"));
        }
        let keep = (path.len() - 1).min(max_seq_len - 3);
        let first = path.len() - keep;
        let mut states = Vec::with_capacity(keep + 1);
        states.push(path[0].clone());
        states.extend(path[first..].iter().cloned());
        Ok(TokenSequence {
            sei,
            goal,
            states,
            first_hpd_path_index: first,
        })
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct MptOutput {
    /// `1 x d` prediction in normalized coordinates.
    pub prediction: Var,
    /// Attention weights per layer, per head (`n x n` each).
    pub attention: Vec<Vec<Var>>,
}

/// Forward pass with the SEI supplied as a tape variable so gradients reach
/// the encoder during training.
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    sei: Var,
    seq: &TokenSequence<T>,
) -> Result<MptOutput> {
    let a = &cfg.attention;
    let n = seq.len();
    if n > cfg.max_seq_len {
        return Err(Error::invalid(format!("sequence of {n} tokens exceeds max_seq_len {}", cfg.max_seq_len)));
    }
    if tape.shape(sei) != (1, a.d_model) {
        return Err(Error::invalid("SEI must be a 1 x d_model row"));
    }
    let width = cfg.dim + ROLE_COUNT;
    let mut raw = Vec::with_capacity((n - 1) * width);
    let roles = seq.roles();
    for (state, role) in std::iter::once(&seq.goal).chain(&seq.states).zip(&roles[1..]) {
        if state.len() != cfg.dim {
            return Err(Error::invalid("token state has the wrong dimension"));
        }
        raw.extend_from_slice(state);
        raw.extend((0..ROLE_COUNT).map(|r| if r == role.index() { T::one() } else { T::zero() }));
    }
    let raw = tape.constant(n - 1, width, raw);
    let emb = linear(tape, raw, p.get("mpt.embed.w"), p.get("mpt.embed.b"))?;
    let z = tape.concat_rows(&[sei, emb]);
    let pos = tape.slice_rows(p.get("mpt.pos"), 0, n);
    let mut x = tape.add(z, pos);

    let mut attention = Vec::with_capacity(a.n_layers);
    for l in 0..a.n_layers {
        let name = |s: &str| format!("mpt.layer{l}.{s}");
        let heads: Vec<HeadVars> = (0..a.n_heads)
            .map(|h| HeadVars {
                w_q: p.get(&name(&format!("head{h}.w_q"))),
                w_k: p.get(&name(&format!("head{h}.w_k"))),
                w_v: p.get(&name(&format!("head{h}.w_v"))),
            })
            .collect();
        let (att, weights) = multi_head_attention(tape, x, &heads, p.get(&name("w_o")))?;
        let r = tape.add(x, att);
        let h = layer_norm(tape, r, p.get(&name("ln1.alpha")), p.get(&name("ln1.delta")))?;
        let f = ffn(
            tape,
            h,
            p.get(&name("ffn.w1")),
            p.get(&name("ffn.b1")),
            p.get(&name("ffn.w2")),
            p.get(&name("ffn.b2")),
        )?;
        let r = tape.add(h, f);
        x = layer_norm(tape, r, p.get(&name("ln2.alpha")), p.get(&name("ln2.delta")))?;
        attention.push(weights);
    }
    let last = tape.slice_rows(x, n - 1, 1);
    let prediction = linear(tape, last, p.get("mpt.head.w"), p.get("mpt.head.b"))?;
    Ok(MptOutput { prediction, attention })
}

/// Attention weights read back from the tape: `layers[l][h]` is a row-major
/// `n x n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMaps<T> {
    pub n: usize,
    pub layers: Vec<Vec<Vec<T>>>,
}

impl<T: Real> AttentionMaps<T> {
    pub fn read(tape: &Tape<T>, out: &MptOutput, n: usize) -> Self {
        AttentionMaps {
            n,
            layers: out
                .attention
                .iter()
                .map(|heads| heads.iter().map(|&w| tape.value(w).to_vec()).collect())
                .collect(),
        }
    }

    /// Head-averaged matrix of layer `layer`.
    pub fn head_average(&self, layer: usize) -> Vec<T> {
        let heads = &self.layers[layer];
        let inv = T::one() / T::from_usize_lossy(heads.len());
        (0..self.n * self.n)
            .map(|i| heads.iter().map(|m| m[i]).sum::<T>() * inv)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HpdAggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionOptions {
    /// Layer to analyze; `None` is the final layer.
    pub layer: Option<usize>,
    pub hpd: HpdAggregation,
}

/// Per-category weights of the last token for one model call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionEntry {
    pub sei: f64,
    pub goal: f64,
    pub start: f64,
    /// Absent when the sequence has no history tokens.
    pub hpd: Option<f64>,
}

impl AttentionEntry {
    pub fn get(&self, role: TokenRole) -> Option<f64> {
        match role {
            TokenRole::Sei => Some(self.sei),
            TokenRole::Goal => Some(self.goal),
            TokenRole::Start => Some(self.start),
            TokenRole::Hpd => self.hpd,
        }
    }
}

pub fn extract_attention<T: Real>(maps: &AttentionMaps<T>, roles: &[TokenRole], opts: AttentionOptions) -> Result<AttentionEntry> {
    let n = maps.n;
    if roles.len() != n || n < 3 {
        return Err(Error::invalid("roles do not match the attention maps"));
    }
    if maps.layers.is_empty() {
        return Err(Error::invalid("model has no attention layers"));
    }
    let layer = opts.layer.unwrap_or(maps.layers.len() - 1);
    if layer >= maps.layers.len() {
        return Err(Error::invalid(format!("attention layer {layer} out of range")));
    }
    let avg = maps.head_average(layer);
    let row = &avg[(n - 1) * n..];
    let mut hpd = Vec::new();
    let mut entry = AttentionEntry {
        sei: 0.0,
        goal: 0.0,
        start: 0.0,
        hpd: None,
    };
    for (role, w) in roles.iter().zip(row) {
        let w = w.as_f64();
        match role {
            TokenRole::Sei => entry.sei = w,
            TokenRole::Goal => entry.goal = w,
            TokenRole::Start => entry.start = w,
            TokenRole::Hpd => hpd.push(w),
        }
    }
    if !hpd.is_empty() {
        let s: f64 = hpd.iter().sum();
        entry.hpd = Some(match opts.hpd {
            HpdAggregation::Mean => s / hpd.len() as f64,
            HpdAggregation::Sum => s,
        });
    }
    Ok(entry)
}

/// One exported attention value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub node_index: usize,
    pub category: TokenRole,
    pub omega_raw: f64,
    pub omega_norm: f64,
    pub degenerate_flag: bool,
}

/// Per-category min-max normalization over an episode. Categories whose
/// values are all equal map to 0 and are flagged degenerate.
pub fn normalize_attention(episode: &[AttentionEntry]) -> Vec<AttentionRow> {
    let mut rows = Vec::new();
    for role in TokenRole::ALL {
        let vals: Vec<(usize, f64)> = episode
            .iter()
            .enumerate()
            .filter_map(|(j, e)| e.get(role).map(|v| (j, v)))
            .collect();
        if vals.is_empty() {
            continue;
        }
        let lo = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let degenerate = hi <= lo;
        rows.extend(vals.into_iter().map(|(j, v)| AttentionRow {
            node_index: j,
            category: role,
            omega_raw: v,
            omega_norm: if degenerate { 0.0 } else { (v - lo) / (hi - lo) },
            degenerate_flag: degenerate,
        }));
    }
    rows
}

pub fn write_attention_csv<W: Write>(mut w: W, rows: &[AttentionRow]) -> std::io::Result<()> {
    writeln!(w, "node_index,category,omega_raw,omega_norm,degenerate_flag")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.node_index, r.category, r.omega_raw, r.omega_norm, r.degenerate_flag
        )?;
    }
    Ok(())
}

/// One prediction: the sample in workspace coordinates (clamped to the
/// bounds) and the attention weights of the call.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub state: State<T>,
    pub normalized: Vec<T>,
    pub attention: AttentionMaps<T>,
    pub roles: Vec<TokenRole>,
}

/// Frozen-parameter inference for one task: parameters are bound and the
/// SEI is computed once, and each call reuses the tape.
pub struct MptSession<'m, T: Real> {
    model: &'m ModelBundle<T>,
    tape: Tape<T>,
    params: BoundParams,
    sei: Var,
    sei_value: SemanticEncoding<T>,
    base_len: usize,
}

impl<'m, T: Real> MptSession<'m, T> {
    pub fn new(model: &'m ModelBundle<T>, task: &PlanningTask<T>) -> Result<Self> {
        if model.config.dim != task.workspace.dim() {
            return Err(Error::invalid(format!(
                "model is for dimension {}, task has {}",
                model.config.dim,
                task.workspace.dim()
            )));
        }
        let env = EnvVector::for_task(task, &model.config)?;
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, false);
        let o = tape.row_vector(env.values, false);
        let sei = encode(&mut tape, &params, &model.config, o)?;
        let sei_value = SemanticEncoding {
            values: tape.value(sei).to_vec(),
        };
        let base_len = tape.len();
        Ok(MptSession {
            model,
            tape,
            params,
            sei,
            sei_value,
            base_len,
        })
    }

    pub fn sei(&self) -> &SemanticEncoding<T> {
        &self.sei_value
    }

    pub fn predict(&mut self, task: &PlanningTask<T>, sigma_prime: &Path<T>) -> Result<Prediction<T>> {
        let cfg = &self.model.config;
        let seq = tokenize(&self.sei_value, task, sigma_prime, cfg.max_seq_len)?;
        self.tape.truncate(self.base_len);
        let out = forward(&mut self.tape, &self.params, cfg, self.sei, &seq)?;
        let normalized = self.tape.value(out.prediction).to_vec();
        let ws = &task.workspace;
        let mut state = ws.denormalize(&normalized);
        ws.clamp(&mut state);
        Ok(Prediction {
            state: State(state),
            normalized,
            attention: AttentionMaps::read(&self.tape, &out, seq.len()),
            roles: seq.roles(),
        })
    }
}
