#pragma once

// Dense complex linear algebra shared by dynamics and objectives.

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace dcrab {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

namespace pauli {

inline CMatrix identity() { return CMatrix::Identity(2, 2); }

inline CMatrix x() {
    CMatrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

inline CMatrix y() {
    CMatrix m(2, 2);
    m << 0, cplx(0, -1), cplx(0, 1), 0;
    return m;
}

inline CMatrix z() {
    CMatrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

/// sigma_- = |0><1|, lowering |1> to |0> with |0> = (1, 0).
inline CMatrix lowering() {
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 1) = 1;
    return m;
}

}  // namespace pauli

inline CMatrix kron(const CMatrix &a, const CMatrix &b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

/// `op` acting on qubit `site` of `n` qubits (site 0 is the leftmost factor).
inline CMatrix embed(const CMatrix &op, int site, int n) {
    CMatrix out = CMatrix::Identity(1, 1);
    for (int q = 0; q < n; ++q) out = kron(out, q == site ? op : pauli::identity());
    return out;
}

inline bool is_hermitian(const CMatrix &m, double tol) {
    return m.rows() == m.cols() && (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline double unitarity_defect(const CMatrix &u) {
    return (u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols())).norm();
}

inline bool is_unitary(const CMatrix &u, double tol) { return u.rows() == u.cols() && unitarity_defect(u) <= tol; }

/// exp(-i H dt) for Hermitian H via eigendecomposition.
inline CMatrix hermitian_step(const CMatrix &h, double dt) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    if (es.info() != Eigen::Success) throw std::runtime_error("hermitian_step: eigensolver failed");
    CVector phases(h.rows());
    for (Eigen::Index k = 0; k < h.rows(); ++k) phases[k] = std::exp(cplx(0, -es.eigenvalues()[k] * dt));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Unitary polar factor: the unitary closest to `m` in Frobenius norm.
inline CMatrix closest_unitary(const CMatrix &m) {
    Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

/// Haar-random unitary from a QR of a Ginibre matrix.
template <class Rng>
CMatrix random_unitary(int n, Rng &rng) {
    std::normal_distribution<double> g;
    CMatrix z(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) z(i, j) = cplx(g(rng), g(rng));
    Eigen::HouseholderQR<CMatrix> qr(z);
    CMatrix q = qr.householderQ();
    CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int k = 0; k < n; ++k) {
        cplx d = r(k, k);
        q.col(k) *= d / std::abs(d);
    }
    return q;
}

template <class Rng>
CVector random_state(int n, Rng &rng) {
    std::normal_distribution<double> g;
    CVector v(n);
    for (int i = 0; i < n; ++i) v[i] = cplx(g(rng), g(rng));
    return v / v.norm();
}

inline CVector basis_state(int n, int k) {
    CVector v = CVector::Zero(n);
    v[k] = 1;
    return v;
}

// JSON: complex numbers are [re, im] pairs; matrices are row-major arrays of rows.

inline nlohmann::json complex_to_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline cplx complex_from_json(const nlohmann::json &j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument("complex number must be [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline nlohmann::json matrix_to_json(const CMatrix &m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(complex_to_json(m(i, k)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline CMatrix matrix_from_json(const nlohmann::json &j) {
    if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    CMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) throw std::invalid_argument("ragged matrix");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = complex_from_json(j[i][k]);
    }
    return m;
}

inline nlohmann::json vector_to_json(const CVector &v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(complex_to_json(v[i]));
    return arr;
}

inline CVector vector_from_json(const nlohmann::json &j) {
    if (!j.is_array() || j.empty()) throw std::invalid_argument("state must be a non-empty array");
    CVector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = complex_from_json(j[i]);
    return v;
}

}  // namespace dcrab
