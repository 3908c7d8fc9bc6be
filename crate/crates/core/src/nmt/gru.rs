use rand::Rng;

use crate::error::Result;
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// GRU cell with any number of input blocks, each with its own input
/// matrix. Gates are stacked as `[z; r; n]`:
///
/// ```text
/// gx = Σ W_b·x_b + b        gh = U·h
/// z = σ(gx_z + gh_z)        r = σ(gx_r + gh_r)
/// n = tanh(gx_n + r ⊙ gh_n)
/// h' = n + z ⊙ (h − n)
/// ```
#[derive(Debug, Clone)]
pub struct GruCell {
    pub hidden: usize,
    pub inputs: Vec<ParamId>,
    pub u: ParamId,
    pub b: ParamId,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dims: &[usize],
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut inputs = Vec::with_capacity(input_dims.len());
        for (i, &d) in input_dims.iter().enumerate() {
            inputs.push(store.get_or_init_default(&format!("{prefix}.w{i}"), &[3 * hidden, d], rng)?);
        }
        let u = store.get_or_init_default(&format!("{prefix}.u"), &[3 * hidden, hidden], rng)?;
        let b = store.get_or_init_default(&format!("{prefix}.b"), &[3 * hidden], rng)?;
        Ok(GruCell { hidden, inputs, u, b })
    }

    /// One step with the cell's own input blocks (`xs` in registration
    /// order) plus any extra `(matrix, input)` blocks.
    pub fn step(&self, tape: &mut Tape, h: Var, xs: &[Var], extra: &[(ParamId, Var)]) -> Result<Var> {
        let hd = self.hidden;
        let mut terms = Vec::with_capacity(xs.len() + extra.len());
        for (&w, &x) in self.inputs.iter().zip(xs) {
            let w = tape.param(w);
            terms.push(tape.matvec(w, x)?);
        }
        for &(w, x) in extra {
            let w = tape.param(w);
            terms.push(tape.matvec(w, x)?);
        }
        let b = tape.param(self.b);
        terms.push(b);
        let gx = tape.add_n(&terms)?;
        let u = tape.param(self.u);
        let gh = tape.matvec(u, h)?;

        let gx_zr = tape.slice(gx, 0, 2 * hd)?;
        let gh_zr = tape.slice(gh, 0, 2 * hd)?;
        let zr_pre = tape.add(gx_zr, gh_zr)?;
        let zr = tape.sigmoid(zr_pre)?;
        let z = tape.slice(zr, 0, hd)?;
        let r = tape.slice(zr, hd, hd)?;
        let gx_n = tape.slice(gx, 2 * hd, hd)?;
        let gh_n = tape.slice(gh, 2 * hd, hd)?;
        let rg = tape.mul(r, gh_n)?;
        let n_pre = tape.add(gx_n, rg)?;
        let n = tape.tanh(n_pre)?;
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }
}

/// Forward and backward GRUs over a sequence.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

/// Output of a bidirectional pass.
#[derive(Debug, Clone)]
pub struct BiStates {
    /// `[fwd_t ; bwd_t]` per position.
    pub per_position: Vec<Var>,
    /// `[fwd_last ; bwd_first]`: final state of each direction.
    pub summary: Var,
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiGru {
            fwd: GruCell::new(store, &format!("{prefix}.fwd"), &[input_dim], hidden, rng)?,
            bwd: GruCell::new(store, &format!("{prefix}.bwd"), &[input_dim], hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    /// Runs both directions from zero states. `xs` must be non-empty.
    pub fn run(&self, tape: &mut Tape, xs: &[Var]) -> Result<BiStates> {
        let (fwd, bwd) = self.run_split(tape, xs)?;
        let mut per_position = Vec::with_capacity(xs.len());
        for (f, b) in fwd.iter().zip(&bwd) {
            per_position.push(tape.concat(&[*f, *b])?);
        }
        let summary = tape.concat(&[*fwd.last().unwrap(), bwd[0]])?;
        Ok(BiStates { per_position, summary })
    }

    /// Per-position forward and backward states, aligned with `xs`.
    pub fn run_split(&self, tape: &mut Tape, xs: &[Var]) -> Result<(Vec<Var>, Vec<Var>)> {
        if xs.is_empty() {
            return Err(crate::Error::Contract(
                "bidirectional GRU over an empty sequence".into(),
            ));
        }
        let h0 = tape.zeros(self.hidden());
        let mut fwd = Vec::with_capacity(xs.len());
        let mut h = h0;
        for &x in xs {
            h = self.fwd.step(tape, h, &[x], &[])?;
            fwd.push(h);
        }
        let mut bwd = vec![h0; xs.len()];
        let mut h = h0;
        for (i, &x) in xs.iter().enumerate().rev() {
            h = self.bwd.step(tape, h, &[x], &[])?;
            bwd[i] = h;
        }
        Ok((fwd, bwd))
    }
}
