//! Recurrent cells: one-step maps `h(k+1) = cell(h(k), x(k))` with closed-form
//! Jacobians and vector-Jacobian products.
//!
//! Gate conventions (these are also the names used in the weight file):
//!
//! * vanilla: `h' = tanh(U h + W x + b)`, gate `h`.
//! * gru: `z = σ(U_z h + W_z x + b_z)`, `r = σ(U_r h + W_r x + b_r)`,
//!   `c = tanh(U_c (r ⊙ h) + W_c x + b_c)`, `h' = (1 − z) ⊙ c + z ⊙ h`.
//! * lstm: state is `[h; c]` of length `2n`. `i, f, o = σ(U_* h + W_* x + b_*)`,
//!   `g = tanh(U_g h + W_g x + b_g)`, `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{midpoint_nodes, scale_rows, sigmoid, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Vanilla,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Vanilla => &["h"],
            CellKind::Gru => &["z", "r", "c"],
            CellKind::Lstm => &["i", "f", "g", "o"],
        }
    }

    /// State dimension for a cell with `hidden` hidden units.
    pub fn state_dim(self, hidden: usize) -> usize {
        match self {
            CellKind::Lstm => 2 * hidden,
            _ => hidden,
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Vanilla => "vanilla",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        })
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(CellKind::Vanilla),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::Schema(format!("unknown cell kind `{other}`"))),
        }
    }
}

/// Affine pre-activation `U h + W x + b` of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// `n x n`, acts on the hidden part of the state.
    pub u: Matrix,
    /// `n x m`, acts on the input.
    pub w: Matrix,
    pub b: Vector,
}

impl Gate {
    pub fn zeros(n: usize, m: usize) -> Self {
        Gate {
            u: Matrix::zeros(n, n),
            w: Matrix::zeros(n, m),
            b: Vector::zeros(n),
        }
    }

    #[inline]
    fn pre(&self, h: &Vector, x: &Vector) -> Vector {
        let mut a = self.b.clone();
        a.gemv(1.0, &self.u, h, 1.0);
        a.gemv(1.0, &self.w, x, 1.0);
        a
    }

    /// Accumulate `a_bar` into the gate's gradient buffers.
    fn accumulate(&mut self, a_bar: &Vector, h: &Vector, x: &Vector) {
        self.u.ger(1.0, a_bar, h, 1.0);
        self.w.ger(1.0, a_bar, x, 1.0);
        self.b += a_bar;
    }

    fn scale(&mut self, s: f64) {
        self.u *= s;
        self.w *= s;
        self.b *= s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    kind: CellKind,
    hidden: usize,
    input: usize,
    gates: Vec<Gate>,
}

/// Partial derivatives of the one-step map.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    /// `∂cell/∂h`, `state_dim x state_dim`.
    pub state: Matrix,
    /// `∂cell/∂x`, `state_dim x m`.
    pub input: Matrix,
}

/// Result of pulling a cotangent back through one cell step.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub state: Vector,
    pub input: Vector,
}

impl CellParams {
    /// Build and validate a cell. `gates` must follow [`CellKind::gate_names`].
    pub fn new(kind: CellKind, hidden: usize, input: usize, gates: Vec<Gate>) -> Result<Self> {
        if hidden == 0 || input == 0 {
            return Err(Error::Config("cell dimensions must be positive".into()));
        }
        let names = kind.gate_names();
        if gates.len() != names.len() {
            return Err(Error::Schema(format!(
                "{kind} cell needs {} gates, got {}",
                names.len(),
                gates.len()
            )));
        }
        for (gate, name) in gates.iter().zip(names) {
            check_shape(&format!("U_{name}"), &gate.u, hidden, hidden)?;
            check_shape(&format!("W_{name}"), &gate.w, hidden, input)?;
            if gate.b.len() != hidden {
                return Err(Error::Shape {
                    name: format!("b_{name}"),
                    rows: hidden,
                    cols: 1,
                    found_rows: gate.b.len(),
                    found_cols: 1,
                });
            }
            for (label, data) in [
                (format!("U_{name}"), gate.u.as_slice()),
                (format!("W_{name}"), gate.w.as_slice()),
                (format!("b_{name}"), gate.b.as_slice()),
            ] {
                if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { name: label, index });
                }
            }
        }
        Ok(CellParams {
            kind,
            hidden,
            input,
            gates,
        })
    }

    pub fn vanilla(u: Matrix, w: Matrix, b: Vector) -> Result<Self> {
        let (n, m) = (u.nrows(), w.ncols());
        CellParams::new(CellKind::Vanilla, n, m, vec![Gate { u, w, b }])
    }

    pub fn zeros(kind: CellKind, hidden: usize, input: usize) -> Self {
        let gates = (0..kind.gate_names().len())
            .map(|_| Gate::zeros(hidden, input))
            .collect();
        CellParams {
            kind,
            hidden,
            input,
            gates,
        }
    }

    /// Uniform initialization in `[-scale, scale]` for every entry.
    pub fn random<R: Rng + ?Sized>(
        kind: CellKind,
        hidden: usize,
        input: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let dist = Uniform::new_inclusive(-scale, scale).expect("finite scale");
        let mut p = CellParams::zeros(kind, hidden, input);
        for g in &mut p.gates {
            g.u.iter_mut().for_each(|v| *v = dist.sample(rng));
            g.w.iter_mut().for_each(|v| *v = dist.sample(rng));
            g.b.iter_mut().for_each(|v| *v = dist.sample(rng));
        }
        p
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim(self.hidden)
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gates_mut(&mut self) -> &mut [Gate] {
        &mut self.gates
    }

    /// Named gate lookup, e.g. `gate("z")` on a GRU.
    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.kind
            .gate_names()
            .iter()
            .position(|g| *g == name)
            .map(|i| &self.gates[i])
    }

    /// Hidden part of a state vector (the whole state except for LSTM).
    pub fn readout(&self, state: &Vector) -> Vector {
        state.rows(0, self.hidden).into_owned()
    }

    pub fn num_params(&self) -> usize {
        self.gates.len() * (self.hidden * self.hidden + self.hidden * self.input + self.hidden)
    }

    fn check(&self, h: &Vector, x: &Vector) -> Result<()> {
        check_dim("cell state", self.state_dim(), h.len())?;
        check_dim("cell input", self.input, x.len())
    }

    /// One recurrence step.
    pub fn step(&self, h: &Vector, x: &Vector) -> Result<Vector> {
        self.check(h, x)?;
        Ok(self.step_unchecked(h, x))
    }

    pub(crate) fn step_unchecked(&self, h: &Vector, x: &Vector) -> Vector {
        match self.kind {
            CellKind::Vanilla => self.gates[0].pre(h, x).map(f64::tanh),
            CellKind::Gru => {
                let t = GruTape::forward(self, h, x);
                t.out
            }
            CellKind::Lstm => {
                let t = LstmTape::forward(self, h, x);
                t.out
            }
        }
    }

    /// Analytic partial derivatives of [`CellParams::step`].
    pub fn jacobians(&self, h: &Vector, x: &Vector) -> Result<Jacobians> {
        self.check(h, x)?;
        Ok(self.jacobians_unchecked(h, x))
    }

    pub(crate) fn jacobians_unchecked(&self, h: &Vector, x: &Vector) -> Jacobians {
        match self.kind {
            CellKind::Vanilla => {
                let g = &self.gates[0];
                let d = g.pre(h, x).map(|a| {
                    let t = a.tanh();
                    1.0 - t * t
                });
                Jacobians {
                    state: scale_rows(&d, &g.u),
                    input: scale_rows(&d, &g.w),
                }
            }
            CellKind::Gru => GruTape::forward(self, h, x).jacobians(self, h),
            CellKind::Lstm => LstmTape::forward(self, h, x).jacobians(self, h),
        }
    }

    /// Only `∂cell/∂x`; cheaper than [`CellParams::jacobians`] for vanilla cells.
    pub(crate) fn input_jacobian_unchecked(&self, h: &Vector, x: &Vector) -> Matrix {
        match self.kind {
            CellKind::Vanilla => {
                let g = &self.gates[0];
                let d = g.pre(h, x).map(|a| {
                    let t = a.tanh();
                    1.0 - t * t
                });
                scale_rows(&d, &g.w)
            }
            _ => self.jacobians_unchecked(h, x).input,
        }
    }

    /// Midpoint-rule mean of `∂cell/∂x(h, x + λ δ)` over `λ ∈ [0, 1]`.
    pub(crate) fn input_jacobian_mean(&self, h: &Vector, x: &Vector, delta: &Vector, nodes: usize) -> Matrix {
        let (n, m) = (self.hidden, self.input);
        // Gate pre-activations are affine in λ: base + λ slope.
        let affine = |g: &Gate, hh: &Vector| {
            let mut base = g.b.clone();
            base.gemv(1.0, &g.u, hh, 1.0);
            base.gemv(1.0, &g.w, x, 1.0);
            (base, &g.w * delta)
        };
        match self.kind {
            CellKind::Vanilla => {
                let g = &self.gates[0];
                let (base, slope) = affine(g, h);
                let mut d = Vector::zeros(n);
                for lam in midpoint_nodes(nodes) {
                    for i in 0..n {
                        let t = (base[i] + lam * slope[i]).tanh();
                        d[i] += 1.0 - t * t;
                    }
                }
                scale_rows(&(d / nodes as f64), &g.w)
            }
            CellKind::Gru => {
                let [gz, gr, gc] = [&self.gates[0], &self.gates[1], &self.gates[2]];
                let (zb, zs) = affine(gz, h);
                let (rb, rs) = affine(gr, h);
                let (cb, cs) = (&gc.b + &gc.w * x, &gc.w * delta);
                let mut out = Matrix::zeros(n, m);
                let (mut z, mut r, mut sv) = (Vector::zeros(n), Vector::zeros(n), Vector::zeros(n));
                let mut ac = Vector::zeros(n);
                for lam in midpoint_nodes(nodes) {
                    for i in 0..n {
                        z[i] = sigmoid(zb[i] + lam * zs[i]);
                        r[i] = sigmoid(rb[i] + lam * rs[i]);
                        sv[i] = r[i] * h[i];
                    }
                    ac.copy_from(&cb);
                    ac.axpy(lam, &cs, 1.0);
                    ac.gemv(1.0, &gc.u, &sv, 1.0);
                    for i in 0..n {
                        let c = ac[i].tanh();
                        let dc = 1.0 - c * c;
                        let dz = z[i] * (1.0 - z[i]);
                        for j in 0..m {
                            let mut jc = gc.w[(i, j)];
                            for k in 0..n {
                                jc += gc.u[(i, k)] * h[k] * r[k] * (1.0 - r[k]) * gr.w[(k, j)];
                            }
                            out[(i, j)] += (1.0 - z[i]) * dc * jc + (h[i] - c) * dz * gz.w[(i, j)];
                        }
                    }
                }
                out / nodes as f64
            }
            CellKind::Lstm => {
                let mut out = Matrix::zeros(self.state_dim(), m);
                for lam in midpoint_nodes(nodes) {
                    out += self.jacobians_unchecked(h, &(x + delta * lam)).input;
                }
                out / nodes as f64
            }
        }
    }

    /// Pull `v` (cotangent of the output) back through one step. When `grads`
    /// is given, parameter gradients are accumulated into it.
    pub fn pullback(
        &self,
        h: &Vector,
        x: &Vector,
        v: &Vector,
        grads: Option<&mut CellParams>,
    ) -> Result<Pullback> {
        self.check(h, x)?;
        check_dim("cotangent", self.state_dim(), v.len())?;
        Ok(self.pullback_unchecked(h, x, v, grads))
    }

    pub(crate) fn pullback_unchecked(
        &self,
        h: &Vector,
        x: &Vector,
        v: &Vector,
        grads: Option<&mut CellParams>,
    ) -> Pullback {
        match self.kind {
            CellKind::Vanilla => {
                let g = &self.gates[0];
                let y = g.pre(h, x).map(f64::tanh);
                let a_bar = v.component_mul(&y.map(|t| 1.0 - t * t));
                if let Some(gr) = grads {
                    gr.gates[0].accumulate(&a_bar, h, x);
                }
                Pullback {
                    state: g.u.tr_mul(&a_bar),
                    input: g.w.tr_mul(&a_bar),
                }
            }
            CellKind::Gru => GruTape::forward(self, h, x).pullback(self, h, x, v, grads),
            CellKind::Lstm => LstmTape::forward(self, h, x).pullback(self, h, x, v, grads),
        }
    }

    /// Same shape, all zeros. Used as a gradient buffer.
    pub fn zeros_like(&self) -> CellParams {
        CellParams::zeros(self.kind, self.hidden, self.input)
    }

    pub fn scale_all(&mut self, s: f64) {
        self.gates.iter_mut().for_each(|g| g.scale(s));
    }

    /// Iterate over every scalar parameter in a fixed order.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.gates
            .iter()
            .flat_map(|g| g.u.iter().chain(g.w.iter()).chain(g.b.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.gates
            .iter_mut()
            .flat_map(|g| g.u.iter_mut().chain(g.w.iter_mut()).chain(g.b.iter_mut()))
    }
}

fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(Error::Shape {
            name: name.to_string(),
            rows,
            cols,
            found_rows: m.nrows(),
            found_cols: m.ncols(),
        })
    }
}

struct GruTape {
    z: Vector,
    r: Vector,
    c: Vector,
    s: Vector,
    out: Vector,
}

impl GruTape {
    fn forward(p: &CellParams, h: &Vector, x: &Vector) -> Self {
        let [gz, gr, gc] = [&p.gates[0], &p.gates[1], &p.gates[2]];
        let z = gz.pre(h, x).map(sigmoid);
        let r = gr.pre(h, x).map(sigmoid);
        let s = r.component_mul(h);
        let c = gc.pre(&s, x).map(f64::tanh);
        let mut out = Vector::zeros(h.len());
        for i in 0..h.len() {
            out[i] = (1.0 - z[i]) * c[i] + z[i] * h[i];
        }
        GruTape { z, r, c, s, out }
    }

    fn jacobians(&self, p: &CellParams, h: &Vector) -> Jacobians {
        let [gz, gr, gc] = [&p.gates[0], &p.gates[1], &p.gates[2]];
        let dz = self.z.map(|z| z * (1.0 - z));
        let dr = self.r.map(|r| r * (1.0 - r));
        let dc = self.c.map(|c| 1.0 - c * c);

        let jz_h = scale_rows(&dz, &gz.u);
        let jz_x = scale_rows(&dz, &gz.w);
        let jr_h = scale_rows(&dr, &gr.u);
        let jr_x = scale_rows(&dr, &gr.w);

        // s = r ⊙ h
        let mut js_h = scale_rows(h, &jr_h);
        for i in 0..h.len() {
            js_h[(i, i)] += self.r[i];
        }
        let js_x = scale_rows(h, &jr_x);

        let jc_h = scale_rows(&dc, &(&gc.u * js_h));
        let jc_x = scale_rows(&dc, &(&gc.w + &gc.u * js_x));

        let one_minus_z = self.z.map(|z| 1.0 - z);
        let h_minus_c = h - &self.c;
        let mut state = scale_rows(&one_minus_z, &jc_h) + scale_rows(&h_minus_c, &jz_h);
        for i in 0..h.len() {
            state[(i, i)] += self.z[i];
        }
        let input = scale_rows(&one_minus_z, &jc_x) + scale_rows(&h_minus_c, &jz_x);
        Jacobians { state, input }
    }

    fn pullback(
        &self,
        p: &CellParams,
        h: &Vector,
        x: &Vector,
        v: &Vector,
        grads: Option<&mut CellParams>,
    ) -> Pullback {
        let [gz, gr, gc] = [&p.gates[0], &p.gates[1], &p.gates[2]];
        let n = h.len();
        let mut ac_bar = Vector::zeros(n);
        let mut az_bar = Vector::zeros(n);
        let mut state = Vector::zeros(n);
        for i in 0..n {
            ac_bar[i] = v[i] * (1.0 - self.z[i]) * (1.0 - self.c[i] * self.c[i]);
            az_bar[i] = v[i] * (h[i] - self.c[i]) * self.z[i] * (1.0 - self.z[i]);
            state[i] = v[i] * self.z[i];
        }
        let s_bar = gc.u.tr_mul(&ac_bar);
        let mut ar_bar = Vector::zeros(n);
        for i in 0..n {
            state[i] += s_bar[i] * self.r[i];
            ar_bar[i] = s_bar[i] * h[i] * self.r[i] * (1.0 - self.r[i]);
        }
        state.gemv_tr(1.0, &gz.u, &az_bar, 1.0);
        state.gemv_tr(1.0, &gr.u, &ar_bar, 1.0);
        let mut input = gc.w.tr_mul(&ac_bar);
        input.gemv_tr(1.0, &gz.w, &az_bar, 1.0);
        input.gemv_tr(1.0, &gr.w, &ar_bar, 1.0);
        if let Some(gr_buf) = grads {
            gr_buf.gates[0].accumulate(&az_bar, h, x);
            gr_buf.gates[1].accumulate(&ar_bar, h, x);
            gr_buf.gates[2].accumulate(&ac_bar, &self.s, x);
        }
        Pullback { state, input }
    }
}

struct LstmTape {
    i: Vector,
    f: Vector,
    g: Vector,
    o: Vector,
    c_prev: Vector,
    tc: Vector,
    out: Vector,
}

impl LstmTape {
    fn forward(p: &CellParams, state: &Vector, x: &Vector) -> Self {
        let n = p.hidden;
        let h = state.rows(0, n).into_owned();
        let c_prev = state.rows(n, n).into_owned();
        let i = p.gates[0].pre(&h, x).map(sigmoid);
        let f = p.gates[1].pre(&h, x).map(sigmoid);
        let g = p.gates[2].pre(&h, x).map(f64::tanh);
        let o = p.gates[3].pre(&h, x).map(sigmoid);
        let mut out = Vector::zeros(2 * n);
        let mut tc = Vector::zeros(n);
        for k in 0..n {
            let c_new = f[k] * c_prev[k] + i[k] * g[k];
            tc[k] = c_new.tanh();
            out[k] = o[k] * tc[k];
            out[n + k] = c_new;
        }
        LstmTape {
            i,
            f,
            g,
            o,
            c_prev,
            tc,
            out,
        }
    }

    fn jacobians(&self, p: &CellParams, _state: &Vector) -> Jacobians {
        let n = p.hidden;
        let [gi, gf, gg, go] = [&p.gates[0], &p.gates[1], &p.gates[2], &p.gates[3]];
        // coefficients of each gate pre-activation in c'
        let ci = Vector::from_fn(n, |k, _| self.g[k] * self.i[k] * (1.0 - self.i[k]));
        let cf = Vector::from_fn(n, |k, _| self.c_prev[k] * self.f[k] * (1.0 - self.f[k]));
        let cg = Vector::from_fn(n, |k, _| self.i[k] * (1.0 - self.g[k] * self.g[k]));
        let co = Vector::from_fn(n, |k, _| self.tc[k] * self.o[k] * (1.0 - self.o[k]));
        let dh_dc = Vector::from_fn(n, |k, _| self.o[k] * (1.0 - self.tc[k] * self.tc[k]));

        let dc_dh = scale_rows(&ci, &gi.u) + scale_rows(&cf, &gf.u) + scale_rows(&cg, &gg.u);
        let dc_dx = scale_rows(&ci, &gi.w) + scale_rows(&cf, &gf.w) + scale_rows(&cg, &gg.w);
        let dhn_dh = scale_rows(&co, &go.u) + scale_rows(&dh_dc, &dc_dh);
        let dhn_dx = scale_rows(&co, &go.w) + scale_rows(&dh_dc, &dc_dx);

        let mut state = Matrix::zeros(2 * n, 2 * n);
        state.view_mut((0, 0), (n, n)).copy_from(&dhn_dh);
        state.view_mut((n, 0), (n, n)).copy_from(&dc_dh);
        for k in 0..n {
            state[(k, n + k)] = dh_dc[k] * self.f[k];
            state[(n + k, n + k)] = self.f[k];
        }
        let mut input = Matrix::zeros(2 * n, p.input);
        input.view_mut((0, 0), (n, p.input)).copy_from(&dhn_dx);
        input.view_mut((n, 0), (n, p.input)).copy_from(&dc_dx);
        Jacobians { state, input }
    }

    fn pullback(
        &self,
        p: &CellParams,
        state: &Vector,
        x: &Vector,
        v: &Vector,
        grads: Option<&mut CellParams>,
    ) -> Pullback {
        let n = p.hidden;
        let h = state.rows(0, n).into_owned();
        let mut a_bar: [Vector; 4] = std::array::from_fn(|_| Vector::zeros(n));
        let mut state_bar = Vector::zeros(2 * n);
        for k in 0..n {
            let vh = v[k];
            let c_bar = v[n + k] + vh * self.o[k] * (1.0 - self.tc[k] * self.tc[k]);
            let o_bar = vh * self.tc[k];
            a_bar[0][k] = c_bar * self.g[k] * self.i[k] * (1.0 - self.i[k]);
            a_bar[1][k] = c_bar * self.c_prev[k] * self.f[k] * (1.0 - self.f[k]);
            a_bar[2][k] = c_bar * self.i[k] * (1.0 - self.g[k] * self.g[k]);
            a_bar[3][k] = o_bar * self.o[k] * (1.0 - self.o[k]);
            state_bar[n + k] = c_bar * self.f[k];
        }
        let mut input = Vector::zeros(p.input);
        let mut h_bar = Vector::zeros(n);
        for (gate, ab) in p.gates.iter().zip(&a_bar) {
            h_bar.gemv_tr(1.0, &gate.u, ab, 1.0);
            input.gemv_tr(1.0, &gate.w, ab, 1.0);
        }
        state_bar.rows_mut(0, n).copy_from(&h_bar);
        if let Some(gr) = grads {
            for (gate, ab) in gr.gates.iter_mut().zip(&a_bar) {
                gate.accumulate(ab, &h, x);
            }
        }
        Pullback {
            state: state_bar,
            input,
        }
    }
}
