//! Statevector evaluation of a hardware-efficient ansatz against Pauli-sum
//! Hamiltonians.
//!
//! The ansatz alternates a layer of single-qubit `RY` rotations with a
//! linear-chain `CZ` entangler. Both gates are real, so the state is kept as a
//! real vector of `2^n` amplitudes. Qubit `i` is bit `i` of the basis index.
//!
//! Compiled depth per layer is one rotation slot plus the entangler: the
//! `n - 1` neighbouring `CZ` gates pack into two alternating sublayers (even
//! bonds, then odd bonds), or a single sublayer when `n = 2`. Hence
//!
//! ```text
//! depth = num_layers * (1 + min(2, n - 1))
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::error::SimError;

pub const MIN_QUBITS: usize = 2;
pub const MAX_QUBITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn label(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn from_label(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    /// `ops[i]` acts on qubit `i`.
    pub ops: Vec<Pauli>,
}

impl PauliTerm {
    /// Parses a label such as `"ZZI"`, where character `i` acts on qubit `i`.
    pub fn from_label(coeff: f64, label: &str) -> Result<Self, SimError> {
        let ops = label
            .chars()
            .map(|c| {
                Pauli::from_label(c)
                    .ok_or_else(|| SimError::InvalidParameter(format!("bad pauli label {c:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { coeff, ops })
    }

    pub fn label(&self) -> String {
        self.ops.iter().map(|p| p.label()).collect()
    }

    /// Bit masks of the qubits carrying an X or Y factor, and a Z or Y factor.
    pub fn masks(&self) -> (usize, usize) {
        let mut x = 0usize;
        let mut z = 0usize;
        for (i, p) in self.ops.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << i,
                Pauli::Z => z |= 1 << i,
                Pauli::Y => {
                    x |= 1 << i;
                    z |= 1 << i;
                }
            }
        }
        (x, z)
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+} {}", self.coeff, self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliHamiltonian {
    pub num_qubits: usize,
    pub terms: Vec<PauliTerm>,
}

fn check_qubits(n: usize) -> Result<(), SimError> {
    if !(MIN_QUBITS..=MAX_QUBITS).contains(&n) {
        return Err(SimError::InvalidParameter(format!(
            "qubit count {n} outside [{MIN_QUBITS}, {MAX_QUBITS}]"
        )));
    }
    Ok(())
}

impl PauliHamiltonian {
    pub fn new(num_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self, SimError> {
        check_qubits(num_qubits)?;
        for t in &terms {
            if t.ops.len() != num_qubits {
                return Err(SimError::DimensionMismatch {
                    expected: num_qubits,
                    got: t.ops.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(SimError::InvalidParameter("non-finite coefficient".into()));
            }
        }
        Ok(Self { num_qubits, terms })
    }

    /// `c * I`.
    pub fn identity(num_qubits: usize, c: f64) -> Result<Self, SimError> {
        Self::new(
            num_qubits,
            vec![PauliTerm {
                coeff: c,
                ops: vec![Pauli::I; num_qubits],
            }],
        )
    }

    /// Concatenates the terms of two Hamiltonians on the same register.
    pub fn plus(&self, other: &PauliHamiltonian) -> Result<Self, SimError> {
        if self.num_qubits != other.num_qubits {
            return Err(SimError::DimensionMismatch {
                expected: self.num_qubits,
                got: other.num_qubits,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            num_qubits: self.num_qubits,
            terms,
        })
    }

    pub fn sum_sq_coeffs(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff * t.coeff).sum()
    }
}

/// Open transverse-field Ising chain `-sum Z_i Z_{i+1} - h sum X_i`.
pub fn build_tfi(num_qubits: usize, field_strength: f64) -> Result<PauliHamiltonian, SimError> {
    check_qubits(num_qubits)?;
    if !field_strength.is_finite() {
        return Err(SimError::InvalidParameter("field strength must be finite".into()));
    }
    let n = num_qubits;
    let mut terms = Vec::with_capacity(2 * n - 1);
    for i in 0..n - 1 {
        let mut ops = vec![Pauli::I; n];
        ops[i] = Pauli::Z;
        ops[i + 1] = Pauli::Z;
        terms.push(PauliTerm { coeff: -1.0, ops });
    }
    for i in 0..n {
        let mut ops = vec![Pauli::I; n];
        ops[i] = Pauli::X;
        terms.push(PauliTerm {
            coeff: -field_strength,
            ops,
        });
    }
    PauliHamiltonian::new(n, terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub num_qubits: usize,
    pub num_layers: usize,
}

impl AnsatzSpec {
    pub fn new(num_qubits: usize, num_layers: usize) -> Result<Self, SimError> {
        check_qubits(num_qubits)?;
        if num_layers == 0 {
            return Err(SimError::InvalidParameter("ansatz needs at least one layer".into()));
        }
        Ok(Self {
            num_qubits,
            num_layers,
        })
    }

    pub fn num_params(&self) -> usize {
        self.num_qubits * self.num_layers
    }

    pub fn entangler_sublayers(&self) -> usize {
        (self.num_qubits - 1).min(2)
    }

    pub fn depth(&self) -> usize {
        self.num_layers * (1 + self.entangler_sublayers())
    }
}

/// Shot budget of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shots {
    Exact,
    Count(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub params: Vec<f64>,
    pub shots: Shots,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub energy: f64,
    pub exact_energy: f64,
    pub variance_estimate: f64,
}

struct OffDiagTerm {
    coeff: f64,
    x: usize,
    z: usize,
}

/// Reusable evaluator for one (ansatz, Hamiltonian) pair.
///
/// Diagonal terms are folded into a single vector; the entangler is a
/// precomputed `+-1` sign vector. A scratch state buffer is reused between
/// calls, so an evaluator must not be shared across threads.
pub struct Evaluator {
    ansatz: AnsatzSpec,
    diag: Vec<f64>,
    offdiag: Vec<OffDiagTerm>,
    cz_sign: Vec<f64>,
    noise_scale: f64,
    state: Vec<f64>,
}

impl Evaluator {
    pub fn new(ansatz: AnsatzSpec, h: &PauliHamiltonian) -> Result<Self, SimError> {
        if ansatz.num_qubits != h.num_qubits {
            return Err(SimError::DimensionMismatch {
                expected: ansatz.num_qubits,
                got: h.num_qubits,
            });
        }
        let n = ansatz.num_qubits;
        let dim = 1usize << n;
        let mut diag = vec![0.0; dim];
        let mut offdiag = Vec::new();
        for t in &h.terms {
            let (x, z) = t.masks();
            let ny = (x & z).count_ones();
            if ny % 2 == 1 {
                // Odd number of Y factors: purely imaginary matrix, zero on real states.
                continue;
            }
            let coeff = if (ny / 2) % 2 == 1 { -t.coeff } else { t.coeff };
            if x == 0 {
                for (k, d) in diag.iter_mut().enumerate() {
                    *d += if (k & z).count_ones() % 2 == 1 { -coeff } else { coeff };
                }
            } else {
                offdiag.push(OffDiagTerm { coeff, x, z });
            }
        }
        let chain = (dim - 1) >> 1;
        let cz_sign = (0..dim)
            .map(|k| {
                if (k & (k >> 1) & chain).count_ones() % 2 == 1 {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            ansatz,
            diag,
            offdiag,
            cz_sign,
            noise_scale: h.sum_sq_coeffs().sqrt(),
            state: vec![0.0; dim],
        })
    }

    pub fn ansatz(&self) -> AnsatzSpec {
        self.ansatz
    }

    /// Standard deviation of the shot-noise term for one evaluation.
    pub fn shot_sd(&self, shots: u32) -> f64 {
        self.noise_scale / f64::from(shots.max(1)).sqrt()
    }

    /// Prepares `|psi(params)>` and returns the amplitudes.
    pub fn prepare(&mut self, params: &[f64]) -> Result<&[f64], SimError> {
        let n = self.ansatz.num_qubits;
        if params.len() != self.ansatz.num_params() {
            return Err(SimError::DimensionMismatch {
                expected: self.ansatz.num_params(),
                got: params.len(),
            });
        }
        let psi = &mut self.state;
        // The first rotation layer acts on |0...0> and yields a product state.
        psi[0] = 1.0;
        for (q, theta) in params[..n].iter().enumerate() {
            let (s, c) = (theta * 0.5).sin_cos();
            let half = 1usize << q;
            for k in 0..half {
                let a = psi[k];
                psi[k] = c * a;
                psi[k + half] = s * a;
            }
        }
        apply_signs(psi, &self.cz_sign);
        for layer in 1..self.ansatz.num_layers {
            let angles = &params[layer * n..(layer + 1) * n];
            let mut q = 0;
            while q + 1 < n {
                apply_ry_pair(psi, q, angles[q], angles[q + 1]);
                q += 2;
            }
            if q < n {
                apply_ry(psi, q, angles[q]);
            }
            apply_signs(psi, &self.cz_sign);
        }
        Ok(&self.state)
    }

    fn energy_of_state(&self) -> f64 {
        let psi = &self.state;
        let mut e: f64 = psi
            .iter()
            .zip(&self.diag)
            .map(|(a, d)| a * a * d)
            .sum();
        for t in &self.offdiag {
            let mut acc = 0.0;
            if t.z == 0 {
                for (k, a) in psi.iter().enumerate() {
                    acc += a * psi[k ^ t.x];
                }
            } else {
                for (k, a) in psi.iter().enumerate() {
                    let v = a * psi[k ^ t.x];
                    if (k & t.z).count_ones() % 2 == 1 {
                        acc -= v;
                    } else {
                        acc += v;
                    }
                }
            }
            e += t.coeff * acc;
        }
        e
    }

    /// Noise-free `<psi(params)|H|psi(params)>`.
    pub fn exact(&mut self, params: &[f64]) -> Result<f64, SimError> {
        self.prepare(params)?;
        Ok(self.energy_of_state())
    }

    /// Degraded and shot-noisy estimate `fidelity * exact + noise`.
    pub fn sampled(
        &mut self,
        req: &EvalRequest,
        stream: &mut RngStream,
    ) -> Result<EvalResult, SimError> {
        if !(req.fidelity > 0.0 && req.fidelity <= 1.0) {
            return Err(SimError::InvalidParameter(format!(
                "fidelity {} outside (0, 1]",
                req.fidelity
            )));
        }
        let exact_energy = self.exact(&req.params)?;
        let (energy, variance_estimate) = match req.shots {
            Shots::Exact => (req.fidelity * exact_energy, 0.0),
            Shots::Count(shots) => {
                let sd = self.shot_sd(shots);
                (
                    req.fidelity * exact_energy + sd * stream.standard_normal(),
                    sd * sd,
                )
            }
        };
        Ok(EvalResult {
            energy,
            exact_energy,
            variance_estimate,
        })
    }
}

#[inline]
fn apply_signs(psi: &mut [f64], signs: &[f64]) {
    for (a, s) in psi.iter_mut().zip(signs) {
        *a *= s;
    }
}

#[inline]
fn apply_ry(psi: &mut [f64], q: usize, theta: f64) {
    let (s, c) = (theta * 0.5).sin_cos();
    let half = 1usize << q;
    for block in psi.chunks_exact_mut(half << 1) {
        let (lo, hi) = block.split_at_mut(half);
        for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
            let x0 = *a0;
            let x1 = *a1;
            *a0 = c * x0 - s * x1;
            *a1 = s * x0 + c * x1;
        }
    }
}

/// `RY(t1)` on qubit `q + 1` and `RY(t0)` on qubit `q` in one sweep.
#[inline]
fn apply_ry_pair(psi: &mut [f64], q: usize, t0: f64, t1: f64) {
    let (s0, c0) = (t0 * 0.5).sin_cos();
    let (s1, c1) = (t1 * 0.5).sin_cos();
    let half = 1usize << q;
    for block in psi.chunks_exact_mut(half << 2) {
        let (b0, rest) = block.split_at_mut(half);
        let (b1, rest) = rest.split_at_mut(half);
        let (b2, b3) = rest.split_at_mut(half);
        for (((a00, a10), a01), a11) in b0
            .iter_mut()
            .zip(b1.iter_mut())
            .zip(b2.iter_mut())
            .zip(b3.iter_mut())
        {
            // Index bits: a{bit q}{bit q+1}.
            let y00 = c0 * *a00 - s0 * *a10;
            let y10 = s0 * *a00 + c0 * *a10;
            let y01 = c0 * *a01 - s0 * *a11;
            let y11 = s0 * *a01 + c0 * *a11;
            *a00 = c1 * y00 - s1 * y01;
            *a01 = s1 * y00 + c1 * y01;
            *a10 = c1 * y10 - s1 * y11;
            *a11 = s1 * y10 + c1 * y11;
        }
    }
}

pub fn exact_expectation(
    ansatz: AnsatzSpec,
    params: &[f64],
    h: &PauliHamiltonian,
) -> Result<f64, SimError> {
    Evaluator::new(ansatz, h)?.exact(params)
}

pub fn sampled_expectation(
    req: &EvalRequest,
    ansatz: AnsatzSpec,
    h: &PauliHamiltonian,
    stream: &mut RngStream,
) -> Result<EvalResult, SimError> {
    Evaluator::new(ansatz, h)?.sampled(req, stream)
}

/// Multiplicative fidelity of a QPU `elapsed` seconds after calibration.
pub fn drift_fidelity(elapsed_since_calib: f64, tau_drift: f64, tau_decay: f64) -> f64 {
    if elapsed_since_calib <= tau_drift {
        1.0
    } else {
        (-(elapsed_since_calib - tau_drift) / tau_decay).exp()
    }
}
