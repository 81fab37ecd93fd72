use super::{derive_seed, ParamSet};
use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Gated recurrent unit with update gate `z`, reset gate `r` and candidate
/// state `h̃`:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams<T> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_h: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundGru {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
    d_in: usize,
    d_h: usize,
}

impl<T: Real> GruCellParams<T> {
    pub fn new(d_in: usize, d_h: usize, seed: u64) -> Result<Self> {
        let w = |i| Tensor::randn_init(&[d_h, d_in], derive_seed(seed, i));
        let u = |i| Tensor::randn_init(&[d_h, d_h], derive_seed(seed, i));
        let b = |i| Tensor::randn_init(&[d_h], derive_seed(seed, i));
        Ok(Self {
            w_z: w(0)?,
            w_r: w(1)?,
            w_h: w(2)?,
            u_z: u(3)?,
            u_r: u(4)?,
            u_h: u(5)?,
            b_z: b(6)?,
            b_r: b(7)?,
            b_h: b(8)?,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn d_h(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundGru {
        BoundGru {
            w: [tape.leaf(&self.w_z), tape.leaf(&self.w_r), tape.leaf(&self.w_h)],
            u: [tape.leaf(&self.u_z), tape.leaf(&self.u_r), tape.leaf(&self.u_h)],
            b: [tape.leaf(&self.b_z), tape.leaf(&self.b_r), tape.leaf(&self.b_h)],
            d_in: self.d_in(),
            d_h: self.d_h(),
        }
    }
}

impl BoundGru {
    pub fn d_h(&self) -> usize {
        self.d_h
    }

    /// One recurrence step; returns the next hidden state.
    pub fn step<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, h: Var) -> Result<Var> {
        if tape.shape(x) != [self.d_in] || tape.shape(h) != [self.d_h] {
            return Err(shape_err!(
                "gru_step expects x[{}] and h[{}], got {:?} and {:?}",
                self.d_in,
                self.d_h,
                tape.shape(x),
                tape.shape(h)
            ));
        }
        let gate = |tape: &mut Tape<'_, T>, i: usize, hh: Var| -> Result<Var> {
            let wx = tape.matmul(self.w[i], x)?;
            let uh = tape.matmul(self.u[i], hh)?;
            let s = tape.add(wx, uh)?;
            tape.add(s, self.b[i])
        };
        let z = gate(tape, 0, h)?;
        let z = tape.sigmoid(z);
        let r = gate(tape, 1, h)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = gate(tape, 2, rh)?;
        let cand = tape.tanh(cand);
        // (1 − z)⊙h + z⊙h̃  ==  h + z⊙(h̃ − h)
        let diff = tape.sub(cand, h)?;
        let zd = tape.mul(z, diff)?;
        tape.add(h, zd)
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.w.to_vec();
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.b);
        v
    }
}

impl<T: Real> ParamSet<T> for GruCellParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("w_r".into(), &self.w_r),
            ("w_h".into(), &self.w_h),
            ("u_z".into(), &self.u_z),
            ("u_r".into(), &self.u_r),
            ("u_h".into(), &self.u_h),
            ("b_z".into(), &self.b_z),
            ("b_r".into(), &self.b_r),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}
