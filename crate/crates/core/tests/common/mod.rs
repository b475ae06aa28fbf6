//! Dense-matrix reference implementation shared by integration tests.

#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use qcosim::quantum::{Pauli, PauliHamiltonian};

pub type C = Complex<f64>;

pub fn pauli_matrix(p: Pauli) -> DMatrix<C> {
    let z = C::new(0.0, 0.0);
    let o = C::new(1.0, 0.0);
    let i = C::new(0.0, 1.0);
    match p {
        Pauli::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        Pauli::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Pauli::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Operator with `ops[q]` on qubit `q`, where qubit `q` is bit `q` of the index.
pub fn kron_all(ops: &[DMatrix<C>]) -> DMatrix<C> {
    let mut m = DMatrix::from_element(1, 1, C::new(1.0, 0.0));
    for op in ops.iter().rev() {
        m = m.kronecker(op);
    }
    m
}

pub fn dense_hamiltonian(h: &PauliHamiltonian) -> DMatrix<C> {
    let dim = 1usize << h.num_qubits;
    let mut m = DMatrix::from_element(dim, dim, C::new(0.0, 0.0));
    for t in &h.terms {
        let ops: Vec<_> = t.ops.iter().map(|p| pauli_matrix(*p)).collect();
        m += kron_all(&ops) * C::new(t.coeff, 0.0);
    }
    m
}

pub fn ry(theta: f64) -> DMatrix<C> {
    let (s, c) = (theta / 2.0).sin_cos();
    DMatrix::from_row_slice(
        2,
        2,
        &[C::new(c, 0.0), C::new(-s, 0.0), C::new(s, 0.0), C::new(c, 0.0)],
    )
}

/// Linear-chain CZ as a dense diagonal, built bond by bond.
pub fn cz_chain(n: usize) -> DMatrix<C> {
    let dim = 1usize << n;
    let mut m = DMatrix::identity(dim, dim);
    for b in 0..n - 1 {
        let mut bond = DMatrix::identity(dim, dim);
        for k in 0..dim {
            if (k >> b) & 1 == 1 && (k >> (b + 1)) & 1 == 1 {
                bond[(k, k)] = C::new(-1.0, 0.0);
            }
        }
        m = bond * m;
    }
    m
}

pub fn dense_state(n: usize, layers: usize, params: &[f64]) -> DVector<C> {
    let dim = 1usize << n;
    let mut psi = DVector::from_element(dim, C::new(0.0, 0.0));
    psi[0] = C::new(1.0, 0.0);
    let ent = cz_chain(n);
    for l in 0..layers {
        let rots: Vec<_> = (0..n).map(|q| ry(params[l * n + q])).collect();
        psi = kron_all(&rots) * psi;
        psi = &ent * psi;
    }
    psi
}

pub fn dense_expectation(h: &DMatrix<C>, psi: &DVector<C>) -> f64 {
    let e = psi.adjoint() * h * psi;
    e[(0, 0)].re
}

pub fn real_part(m: &DMatrix<C>) -> DMatrix<f64> {
    m.map(|c| c.re)
}

/// Lowest eigenvalue of the dense Hamiltonian.
pub fn ground_energy(h: &PauliHamiltonian) -> f64 {
    SymmetricEigen::new(real_part(&dense_hamiltonian(h))).eigenvalues.min()
}

/// Lowest and highest eigenvalues of the dense Hamiltonian.
pub fn spectrum_bounds(h: &PauliHamiltonian) -> (f64, f64) {
    let e = SymmetricEigen::new(real_part(&dense_hamiltonian(h))).eigenvalues;
    (e.min(), e.max())
}
