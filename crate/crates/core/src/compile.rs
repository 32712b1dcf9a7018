//! Pulse sequences, two-qubit gate compilation, rewrite simplification and
//! refocusing schemes.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::evolve::{sequence_unitary, Frame};
use crate::linalg::{embed, rotation_2x2, Operator};
use crate::shapes::{wrap_phase, PulseSegment};
use crate::spinsys::{CouplingModel, SpinSystem};

/// Rotation axis of an ideal rotation. `InPlane(φ)` is the axis
/// (cos φ, sin φ, 0), so `X` equals `InPlane(0)` and `Y` equals `InPlane(π/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
    InPlane(f64),
}

impl Axis {
    pub fn in_plane_angle(self) -> Option<f64> {
        match self {
            Axis::X => Some(0.0),
            Axis::Y => Some(PI / 2.0),
            Axis::InPlane(p) => Some(p),
            Axis::Z => None,
        }
    }

    pub fn vector(self) -> [f64; 3] {
        match self.in_plane_angle() {
            Some(p) => [p.cos(), p.sin(), 0.0],
            None => [0.0, 0.0, 1.0],
        }
    }

    pub fn from_angle(phi: f64) -> Axis {
        let w = wrap_phase(phi);
        if w.abs() < 1e-14 {
            Axis::X
        } else if (w - PI / 2.0).abs() < 1e-14 {
            Axis::Y
        } else {
            Axis::InPlane(w)
        }
    }
}

/// One element of a pulse sequence. Spin indices are 0-based in Rust and
/// 1-based in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SeqItem {
    Pulse(PulseSegment),
    Delay {
        duration_s: f64,
    },
    /// Instantaneous rotation of one spin.
    Rotation {
        #[serde(with = "crate::io::one_based")]
        spin: usize,
        axis: Axis,
        angle_rad: f64,
    },
    /// Rotation exp(−iθI_z) realized by shifting the phase reference of one
    /// spin; takes no time.
    FrameZ {
        #[serde(with = "crate::io::one_based")]
        spin: usize,
        angle_rad: f64,
    },
}

impl SeqItem {
    pub fn delay(duration_s: f64) -> Self {
        SeqItem::Delay { duration_s }
    }

    pub fn rotation(spin: usize, axis: Axis, angle_rad: f64) -> Self {
        SeqItem::Rotation { spin, axis, angle_rad }
    }

    pub fn frame_z(spin: usize, angle_rad: f64) -> Self {
        SeqItem::FrameZ { spin, angle_rad }
    }

    /// 90° rotations in the usual shorthand: X, X̄, Y, Ȳ, Z, Z̄.
    pub fn x(spin: usize) -> Self {
        SeqItem::rotation(spin, Axis::X, PI / 2.0)
    }
    pub fn x_bar(spin: usize) -> Self {
        SeqItem::rotation(spin, Axis::InPlane(PI), PI / 2.0)
    }
    pub fn y(spin: usize) -> Self {
        SeqItem::rotation(spin, Axis::Y, PI / 2.0)
    }
    pub fn y_bar(spin: usize) -> Self {
        SeqItem::rotation(spin, Axis::InPlane(-PI / 2.0), PI / 2.0)
    }
    pub fn z(spin: usize) -> Self {
        SeqItem::frame_z(spin, PI / 2.0)
    }
    pub fn z_bar(spin: usize) -> Self {
        SeqItem::frame_z(spin, -PI / 2.0)
    }

    pub fn duration(&self) -> f64 {
        match self {
            SeqItem::Pulse(p) => p.duration_s,
            SeqItem::Delay { duration_s } => *duration_s,
            _ => 0.0,
        }
    }

    /// Unitary of an instantaneous item on `n` spins.
    pub fn ideal_unitary(&self, n: usize) -> Option<Operator> {
        match *self {
            SeqItem::Rotation { spin, axis, angle_rad } => Some(embed(&rotation_2x2(axis.vector(), angle_rad), spin, n)),
            SeqItem::FrameZ { spin, angle_rad } => Some(embed(&rotation_2x2([0.0, 0.0, 1.0], angle_rad), spin, n)),
            _ => None,
        }
    }

    /// Spin acted on by an instantaneous single-spin item.
    fn single_spin(&self) -> Option<usize> {
        match *self {
            SeqItem::Rotation { spin, .. } | SeqItem::FrameZ { spin, .. } => Some(spin),
            _ => None,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            SeqItem::Pulse(p) => p.validate(n),
            SeqItem::Delay { duration_s } => {
                if !(*duration_s >= 0.0) || !duration_s.is_finite() {
                    return Err(Error::invalid(format!("delay must be non-negative, got {duration_s}")));
                }
                Ok(())
            }
            SeqItem::Rotation { spin, angle_rad, axis } => {
                if *spin >= n {
                    return Err(Error::invalid(format!("rotation on spin {} of a {n}-spin system", spin + 1)));
                }
                if !angle_rad.is_finite() || axis.in_plane_angle().is_some_and(|p| !p.is_finite()) {
                    return Err(Error::invalid("rotation angle and axis must be finite"));
                }
                Ok(())
            }
            SeqItem::FrameZ { spin, angle_rad } => {
                if *spin >= n {
                    return Err(Error::invalid(format!("frame rotation on spin {} of a {n}-spin system", spin + 1)));
                }
                if !angle_rad.is_finite() {
                    return Err(Error::invalid("frame rotation angle must be finite"));
                }
                Ok(())
            }
        }
    }
}

/// Ordered list of items, earliest first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sequence {
    items: Vec<SeqItem>,
}

impl Sequence {
    pub fn new() -> Self {
        Sequence::default()
    }

    pub fn from_items(items: Vec<SeqItem>) -> Self {
        Sequence { items }
    }

    pub fn from_segments(segments: &[PulseSegment]) -> Self {
        Sequence { items: segments.iter().cloned().map(SeqItem::Pulse).collect() }
    }

    pub fn push(&mut self, item: SeqItem) {
        self.items.push(item);
    }

    pub fn extend(&mut self, other: &Sequence) {
        self.items.extend(other.items.iter().cloned());
    }

    pub fn items(&self) -> &[SeqItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.items.iter().map(SeqItem::duration).sum()
    }

    /// Physical pulses: ideal rotations and RF segments. Frame rotations are free.
    pub fn pulse_count(&self) -> usize {
        self.items.iter().filter(|i| matches!(i, SeqItem::Rotation { .. } | SeqItem::Pulse(_))).count()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.items.iter().try_for_each(|i| i.validate(n))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Cphase,
    Cnot,
}

impl std::str::FromStr for GateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cphase" => Ok(GateKind::Cphase),
            "cnot" => Ok(GateKind::Cnot),
            other => Err(Error::invalid(format!("unknown gate '{other}'"))),
        }
    }
}

/// Compiles CPHASE or CNOT between `control` and `target` (0-based) into
/// ideal rotations, frame rotations and free evolution under the coupling.
///
/// With J > 0 the CNOT is √i Z_c Z̄_t X_t U_J(1/2J) Y_t and CPHASE is
/// √−i Z̄_c Z̄_t U_J(1/2J). A negative coupling runs the conjugated forms.
/// Couplings to other spins are refocused with a keep-pair Hadamard scheme.
/// The result reproduces the gate in the multiply rotating frame.
pub fn two_qubit_gate(sys: &SpinSystem, kind: GateKind, control: usize, target: usize) -> Result<Sequence> {
    let n = sys.n();
    if sys.model() != CouplingModel::WeakZz {
        return Err(Error::invalid("gate compilation needs the weak_zz coupling model"));
    }
    if control >= n || target >= n || control == target {
        return Err(Error::invalid(format!("invalid control/target pair ({}, {})", control + 1, target + 1)));
    }
    let j = sys.coupling(control, target);
    if j == 0.0 {
        return Err(Error::invalid("control and target are not coupled"));
    }
    let evolution = coupled_evolution(sys, control, target, 1.0 / (2.0 * j.abs()))?;
    let (c, t) = (control, target);
    let items: Vec<SeqItem> = match (kind, j > 0.0) {
        (GateKind::Cphase, true) => vec![SeqItem::z_bar(c), SeqItem::z_bar(t)],
        (GateKind::Cphase, false) => vec![SeqItem::z(c), SeqItem::z(t)],
        (GateKind::Cnot, true) => vec![SeqItem::y(t)],
        (GateKind::Cnot, false) => vec![SeqItem::z_bar(c), SeqItem::z(t), SeqItem::x_bar(t)],
    };
    let mut seq = Sequence::new();
    match kind {
        GateKind::Cphase => {
            seq.extend(&evolution);
            items.into_iter().for_each(|i| seq.push(i));
        }
        GateKind::Cnot => {
            items.into_iter().for_each(|i| seq.push(i));
            seq.extend(&evolution);
            if j > 0.0 {
                seq.push(SeqItem::x(t));
                seq.push(SeqItem::z_bar(t));
                seq.push(SeqItem::z(c));
            } else {
                seq.push(SeqItem::y_bar(t));
            }
        }
    }
    Ok(seq)
}

/// Free evolution of duration `d` under J_ct with every other coupling
/// refocused.
fn coupled_evolution(sys: &SpinSystem, c: usize, t: usize, d: f64) -> Result<Sequence> {
    let n = sys.n();
    let others = (0..n).any(|i| (i + 1..n).any(|k| (i, k) != (c.min(t), c.max(t)) && sys.coupling(i, k) != 0.0));
    if !others {
        return Ok(Sequence::from_items(vec![SeqItem::delay(d)]));
    }
    Ok(hadamard_scheme(n, Some((c, t)))?.with_total_duration(d).to_sequence())
}

/// Canonical CNOT with spin 1 as control.
pub fn canonical_cnot() -> Operator {
    Operator::from_real_rows(4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0.]).expect("4x4")
}

pub fn canonical_cphase() -> Operator {
    Operator::from_real_rows(4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., -1.]).expect("4x4")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimplifyOptions {
    /// Frame rotations commute with free evolution (diagonal couplings).
    pub commute_z_through_delays: bool,
    /// The input state is diagonal, so frame rotations before any pulse on
    /// their spin do nothing.
    pub drop_leading_z: bool,
    /// Readout is in the z basis, so trailing frame rotations do nothing.
    pub drop_trailing_z: bool,
}

pub const SIMPLIFY_PASS_LIMIT: usize = 100;
const ANGLE_TOL: f64 = 1e-12;

fn is_multiple_of_2pi(a: f64) -> bool {
    let r = a.rem_euclid(2.0 * PI);
    r < ANGLE_TOL || 2.0 * PI - r < ANGLE_TOL
}

/// Rewrites a sequence into an equivalent shorter one, up to global phase.
///
/// Rules, tried at the earliest position first: drop zero rotations and
/// empty delays; merge adjacent delays; merge same-axis or opposite-axis
/// rotations of a spin across items on other spins (so X X̄ cancels); move
/// frame rotations later through rotations of their spin by rephasing them,
/// and through delays when allowed; and, with the matching options, drop
/// frame rotations at the boundaries.
pub fn simplify(seq: &Sequence) -> Sequence {
    simplify_with(seq, &SimplifyOptions::default())
}

pub fn simplify_with(seq: &Sequence, opts: &SimplifyOptions) -> Sequence {
    let mut items = seq.items.clone();
    for _ in 0..SIMPLIFY_PASS_LIMIT {
        if !rewrite_once(&mut items, opts) {
            break;
        }
    }
    Sequence { items }
}

/// Next index after `i` whose item touches `spin`, skipping instantaneous
/// items on other spins. `None` means the end of the sequence.
fn next_on_spin(items: &[SeqItem], i: usize, spin: usize) -> Option<usize> {
    (i + 1..items.len()).find(|&k| items[k].single_spin().is_none_or(|s| s == spin))
}

fn rewrite_once(items: &mut Vec<SeqItem>, opts: &SimplifyOptions) -> bool {
    for i in 0..items.len() {
        match items[i].clone() {
            SeqItem::Rotation { angle_rad, .. } | SeqItem::FrameZ { angle_rad, .. } if is_multiple_of_2pi(angle_rad) => {
                items.remove(i);
                return true;
            }
            SeqItem::Delay { duration_s } if duration_s == 0.0 => {
                items.remove(i);
                return true;
            }
            SeqItem::Delay { duration_s } => {
                if let Some(SeqItem::Delay { duration_s: d2 }) = items.get(i + 1).cloned() {
                    items[i] = SeqItem::delay(duration_s + d2);
                    items.remove(i + 1);
                    return true;
                }
            }
            SeqItem::Rotation { spin, axis, angle_rad } => {
                if let Some(k) = next_on_spin(items, i, spin) {
                    if let SeqItem::Rotation { axis: a2, angle_rad: t2, .. } = items[k] {
                        if let Some(sign) = axis_relation(axis, a2) {
                            items[i] = SeqItem::rotation(spin, axis, angle_rad + sign * t2);
                            items.remove(k);
                            return true;
                        }
                    }
                    if let (Axis::Z, SeqItem::FrameZ { angle_rad: t2, .. }) = (axis, &items[k]) {
                        items[i] = SeqItem::frame_z(spin, angle_rad + t2);
                        items.remove(k);
                        return true;
                    }
                }
            }
            SeqItem::FrameZ { spin, angle_rad } => {
                if opts.drop_leading_z && items[..i].iter().all(|it| leading_transparent(it, spin, opts)) {
                    items.remove(i);
                    return true;
                }
                match next_on_spin(items, i, spin) {
                    None => {
                        if opts.drop_trailing_z {
                            items.remove(i);
                            return true;
                        }
                        // Only other-spin items follow; park it behind them.
                        if items[i + 1..].iter().any(|it| !matches!(it, SeqItem::FrameZ { .. })) {
                            let z = items.remove(i);
                            items.push(z);
                            return true;
                        }
                    }
                    Some(k) => match items[k].clone() {
                        SeqItem::FrameZ { angle_rad: t2, .. } | SeqItem::Rotation { axis: Axis::Z, angle_rad: t2, .. } => {
                            items[i] = SeqItem::frame_z(spin, angle_rad + t2);
                            items.remove(k);
                            return true;
                        }
                        SeqItem::Rotation { axis, angle_rad: alpha, .. } => {
                            let phi = axis.in_plane_angle().expect("in-plane axis");
                            let moved = SeqItem::rotation(spin, Axis::from_angle(phi - angle_rad), alpha);
                            items[k] = moved;
                            let z = items.remove(i);
                            items.insert(k, z);
                            return true;
                        }
                        SeqItem::Delay { .. } if opts.commute_z_through_delays => {
                            let z = items.remove(i);
                            items.insert(k, z);
                            return true;
                        }
                        _ => {}
                    },
                }
            }
            _ => {}
        }
    }
    false
}

fn leading_transparent(item: &SeqItem, spin: usize, opts: &SimplifyOptions) -> bool {
    match item {
        SeqItem::Rotation { spin: s, .. } | SeqItem::FrameZ { spin: s, .. } => *s != spin,
        SeqItem::Delay { .. } => opts.commute_z_through_delays,
        SeqItem::Pulse(_) => false,
    }
}

/// +1 for the same axis, −1 for opposite axes, `None` otherwise.
fn axis_relation(a: Axis, b: Axis) -> Option<f64> {
    match (a.in_plane_angle(), b.in_plane_angle()) {
        (None, None) => Some(1.0),
        (Some(p), Some(q)) => {
            let d = wrap_phase(p - q).abs();
            if d < ANGLE_TOL {
                Some(1.0)
            } else if (d - PI).abs() < ANGLE_TOL {
                Some(-1.0)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Sign pattern over spins (rows) and intervals (columns). A sign change
/// between adjacent columns is a 180° pulse on that spin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefocusScheme {
    signs: Vec<Vec<i8>>,
    intervals_s: Vec<f64>,
}

impl RefocusScheme {
    pub fn new(signs: Vec<Vec<i8>>, intervals_s: Vec<f64>) -> Result<Self> {
        let m = intervals_s.len();
        if signs.is_empty() || m == 0 {
            return Err(Error::invalid("a scheme needs at least one spin and one interval"));
        }
        for row in &signs {
            if row.len() != m {
                return Err(Error::invalid("every sign row needs one entry per interval"));
            }
            if row.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::invalid("signs must be +1 or -1"));
            }
            if row[0] != 1 {
                return Err(Error::invalid("every row must start at +1"));
            }
        }
        if intervals_s.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::invalid("intervals must be non-negative"));
        }
        Ok(RefocusScheme { signs, intervals_s })
    }

    pub fn signs(&self) -> &[Vec<i8>] {
        &self.signs
    }

    pub fn intervals_s(&self) -> &[f64] {
        &self.intervals_s
    }

    pub fn n_spins(&self) -> usize {
        self.signs.len()
    }

    pub fn n_intervals(&self) -> usize {
        self.intervals_s.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.intervals_s.iter().sum()
    }

    pub fn with_intervals(mut self, intervals_s: Vec<f64>) -> Result<Self> {
        if intervals_s.len() != self.n_intervals() {
            return Err(Error::Dimension { expected: self.n_intervals(), found: intervals_s.len() });
        }
        self.intervals_s = intervals_s;
        RefocusScheme::new(self.signs, self.intervals_s)
    }

    /// Rescales all intervals so they sum to `total`.
    pub fn with_total_duration(mut self, total: f64) -> Self {
        let cur = self.total_duration();
        let m = self.n_intervals() as f64;
        for t in &mut self.intervals_s {
            *t = if cur > 0.0 { *t * total / cur } else { total / m };
        }
        self
    }

    /// Spins flipped at the start of each column (index 0 is always empty),
    /// followed by the closing flips that restore every spin.
    pub fn flips(&self) -> Vec<Vec<usize>> {
        let m = self.n_intervals();
        let mut out = vec![Vec::new(); m + 1];
        for (k, row) in self.signs.iter().enumerate() {
            for c in 1..m {
                if row[c] != row[c - 1] {
                    out[c].push(k);
                }
            }
            if row[m - 1] == -1 {
                out[m].push(k);
            }
        }
        out
    }

    /// True when no column boundary flips more than one spin.
    pub fn has_simultaneous_flips(&self) -> bool {
        self.flips()[..self.n_intervals()].iter().any(|f| f.len() > 1)
    }

    /// Ideal X² refocusing pulses between delays.
    pub fn to_sequence(&self) -> Sequence {
        let flips = self.flips();
        let mut seq = Sequence::new();
        for (c, &tau) in self.intervals_s.iter().enumerate() {
            for &k in &flips[c] {
                seq.push(SeqItem::rotation(k, Axis::X, PI));
            }
            seq.push(SeqItem::delay(tau));
        }
        for &k in &flips[self.n_intervals()] {
            seq.push(SeqItem::rotation(k, Axis::X, PI));
        }
        seq
    }

    /// Duration-weighted signed average of each coupling, J_ij Σ_c τ_c s_ic s_jc / T.
    pub fn analytic_couplings(&self, sys: &SpinSystem) -> Vec<Vec<f64>> {
        let n = sys.n();
        let total = self.total_duration();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w: f64 = (0..self.n_intervals())
                    .map(|c| self.intervals_s[c] * (self.signs[i][c] * self.signs[j][c]) as f64)
                    .sum();
                out[i][j] = sys.coupling(i, j) * w / total;
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("spin");
        for c in 0..self.n_intervals() {
            s.push_str(&format!(",interval_{}", c + 1));
        }
        s.push('\n');
        s.push_str("duration_s");
        for t in &self.intervals_s {
            s.push_str(&format!(",{}", crate::io::fmt_f64(*t)));
        }
        s.push('\n');
        for (k, row) in self.signs.iter().enumerate() {
            s.push_str(&format!("{}", k + 1));
            for v in row {
                s.push_str(if *v > 0 { ",+" } else { ",-" });
            }
            s.push('\n');
        }
        s
    }
}

fn is_prime(q: usize) -> bool {
    q >= 2 && (2..).take_while(|d| d * d <= q).all(|d| q % d != 0)
}

fn sylvester_double(h: &[Vec<i8>]) -> Vec<Vec<i8>> {
    let m = h.len();
    let mut out = vec![vec![0i8; 2 * m]; 2 * m];
    for r in 0..m {
        for c in 0..m {
            out[r][c] = h[r][c];
            out[r][c + m] = h[r][c];
            out[r + m][c] = h[r][c];
            out[r + m][c + m] = -h[r][c];
        }
    }
    out
}

/// Paley construction of order q+1 for a prime q ≡ 3 (mod 4).
fn paley(q: usize) -> Vec<Vec<i8>> {
    let residues: Vec<bool> = {
        let mut r = vec![false; q];
        for x in 1..q {
            r[(x * x) % q] = true;
        }
        r
    };
    let chi = |a: usize| -> i8 {
        if a % q == 0 {
            0
        } else if residues[a % q] {
            1
        } else {
            -1
        }
    };
    let m = q + 1;
    let mut h = vec![vec![0i8; m]; m];
    for c in 1..m {
        h[0][c] = 1;
        h[c][0] = -1;
    }
    for r in 0..q {
        for c in 0..q {
            h[r + 1][c + 1] = chi(c + q - r);
        }
    }
    for (k, row) in h.iter_mut().enumerate() {
        row[k] += 1;
    }
    normalize(h)
}

/// Flips rows and columns so that the first row and column are all +1.
fn normalize(mut h: Vec<Vec<i8>>) -> Vec<Vec<i8>> {
    let m = h.len();
    for c in 0..m {
        if h[0][c] < 0 {
            for row in h.iter_mut() {
                row[c] = -row[c];
            }
        }
    }
    for row in h.iter_mut() {
        if row[0] < 0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
    h
}

/// Normalized Hadamard matrix of the given order, from Sylvester doubling of
/// 1 or of a Paley matrix. Orders outside those families are rejected.
pub fn hadamard_matrix(order: usize) -> Result<Vec<Vec<i8>>> {
    if order == 0 {
        return Err(Error::invalid("Hadamard order must be positive"));
    }
    let mut base = order;
    let mut doublings = 0;
    while base % 2 == 0 && base > 1 {
        let m = base - 1;
        if base % 4 == 0 && is_prime(m) && m % 4 == 3 {
            break;
        }
        base /= 2;
        doublings += 1;
    }
    let mut h = if base == 1 {
        vec![vec![1i8]]
    } else if is_prime(base - 1) && (base - 1) % 4 == 3 {
        paley(base - 1)
    } else {
        return Err(Error::invalid(format!("no Hadamard construction available for order {order}")));
    };
    for _ in 0..doublings {
        h = sylvester_double(&h);
    }
    Ok(h)
}

/// Smallest order ≥ n that `hadamard_matrix` can build.
pub fn constructible_order(n: usize) -> Result<usize> {
    (n.max(1)..=4 * n.max(1) + 4)
        .find(|&m| hadamard_matrix(m).is_ok())
        .ok_or_else(|| Error::invalid(format!("no constructible Hadamard order at or above {n}")))
}

/// Decoupling scheme from the rows of a Hadamard matrix, with unit total
/// duration. With `keep = Some((i, j))` spins i and j share a row so their
/// coupling survives at full strength while every other pair is removed.
pub fn hadamard_scheme(n: usize, keep: Option<(usize, usize)>) -> Result<RefocusScheme> {
    if n == 0 {
        return Err(Error::invalid("scheme needs at least one spin"));
    }
    let distinct = match keep {
        Some((i, j)) => {
            if i >= n || j >= n || i == j {
                return Err(Error::invalid(format!("invalid kept pair ({}, {})", i + 1, j + 1)));
            }
            n - 1
        }
        None => n,
    };
    let order = constructible_order(distinct)?;
    let h = hadamard_matrix(order)?;
    let mut rows = Vec::with_capacity(n);
    let mut next = 0;
    for k in 0..n {
        match keep {
            Some((i, j)) if k == i.max(j) => rows.push(rows[i.min(j)]),
            _ => {
                rows.push(next);
                next += 1;
            }
        }
    }
    let signs = rows.iter().map(|&r| h[r].clone()).collect();
    RefocusScheme::new(signs, vec![1.0 / order as f64; order])
}

/// Interval-doubling scheme with 2^{n−1} unit-total intervals. Spin 1 never
/// flips; spin k ≥ 2 flips at the start of columns that are odd multiples
/// of 2^{n−k}, so no two spins ever flip together.
pub fn doubling_scheme(n: usize) -> Result<RefocusScheme> {
    if n == 0 || n > 20 {
        return Err(Error::invalid(format!("doubling scheme needs 1..=20 spins, got {n}")));
    }
    let m = 1usize << (n - 1);
    let mut signs = vec![vec![1i8; m]; n];
    for (k, row) in signs.iter_mut().enumerate().skip(1) {
        let block = 1usize << (n - 1 - k);
        let mut s = 1i8;
        for (c, v) in row.iter_mut().enumerate() {
            if c > 0 && c % block == 0 && (c / block) % 2 == 1 {
                s = -s;
            }
            *v = s;
        }
    }
    RefocusScheme::new(signs, vec![1.0 / m as f64; m])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    /// Couplings extracted from the simulated propagator, Hz.
    pub effective_j_hz: Vec<Vec<f64>>,
    /// Duration-weighted signed averages expected from the sign pattern, Hz.
    pub expected_j_hz: Vec<Vec<f64>>,
    pub max_deviation_hz: f64,
    /// Distance, after global-phase alignment, between the scheme propagator
    /// and free evolution under the expected couplings for the full duration.
    pub unitary_deviation: f64,
}

/// Simulates the scheme with ideal instantaneous X² pulses in the multiply
/// rotating frame and reads each pair's effective coupling from the
/// accumulated diagonal phases.
pub fn verify_scheme(scheme: &RefocusScheme, sys: &SpinSystem) -> Result<SchemeReport> {
    if sys.model() != CouplingModel::WeakZz {
        return Err(Error::invalid("scheme verification needs the diagonal weak_zz model"));
    }
    let n = sys.n();
    if scheme.n_spins() != n {
        return Err(Error::Dimension { expected: n, found: scheme.n_spins() });
    }
    let total = scheme.total_duration();
    if !(total > 0.0) {
        return Err(Error::invalid("scheme has zero total duration"));
    }
    let expected = scheme.analytic_couplings(sys);
    let jmax = sys.couplings_hz().iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    // Shrink time so that every diagonal phase stays far from the branch cut.
    let scaled_total = if jmax > 0.0 { (0.1 / (jmax * n as f64 * n as f64)).min(total) } else { total };
    let scaled = scheme.clone().with_total_duration(scaled_total);
    let u = sequence_unitary(sys, &scaled.to_sequence(), Frame::MultiplyRotating, None)?;
    let dim = sys.dim();
    let reference = u.get(0, 0);
    let offdiag = (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c))).filter(|(r, c)| r != c);
    if offdiag.map(|(r, c)| u.get(r, c).norm()).fold(0.0, f64::max) > 1e-9 {
        return Err(Error::numerical("scheme propagator is not diagonal"));
    }
    let phases: Vec<f64> = (0..dim).map(|b| (u.get(b, b) / reference).arg()).collect();
    let z = |b: usize, k: usize| if b >> (n - 1 - k) & 1 == 0 { 1.0 } else { -1.0 };
    let mut effective = vec![vec![0.0; n]; n];
    let mut max_dev: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let walsh: f64 = (0..dim).map(|b| phases[b] * z(b, i) * z(b, j)).sum::<f64>() / dim as f64;
            // Phase of |b⟩ is −(π T/2) Σ J' z_i z_j.
            let jeff = -2.0 * walsh / (PI * scaled_total);
            effective[i][j] = jeff;
            effective[j][i] = jeff;
            max_dev = max_dev.max((jeff - expected[i][j]).abs());
        }
    }
    let full = sequence_unitary(sys, &scheme.to_sequence(), Frame::MultiplyRotating, None)?;
    let target_sys = sys.with_couplings(expected.clone())?.with_offsets(vec![0.0; n])?;
    let target_h = crate::spinsys::system_hamiltonian(&target_sys, None)?;
    let target = target_h.expm_hermitian(total);
    let unitary_deviation = full.phase_aligned_distance(&target);
    Ok(SchemeReport { effective_j_hz: effective, expected_j_hz: expected, max_deviation_hz: max_dev, unitary_deviation })
}
