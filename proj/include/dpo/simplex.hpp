#pragma once

// Dense two-phase primal simplex for small equality-form programs
//   min c.x  s.t.  A x = b, x >= 0.
// Bland's rule (lowest eligible index for both the entering column and the
// leaving-row tie break) guarantees termination. Problem sizes here are a
// handful of rows and columns, so a full tableau is the simplest correct
// choice.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpo/errors.hpp"

namespace dpo {

struct LpResult {
    bool feasible = false;
    Eigen::VectorXd x;
    double objective = 0.0;
};

namespace detail {

class SimplexTableau {
  public:
    SimplexTableau(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tol)
        : m_(static_cast<int>(a.rows())), n_(static_cast<int>(a.cols())), tol_(tol) {
        t_.resize(m_, n_ + m_ + 1);
        t_.leftCols(n_) = a;
        t_.middleCols(n_, m_) = Eigen::MatrixXd::Identity(m_, m_);
        t_.col(n_ + m_) = b;
        for (int i = 0; i < m_; ++i)
            if (t_(i, n_ + m_) < 0.0) t_.row(i) = -t_.row(i);
        basis_.resize(m_);
        for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
    }

    // Runs Bland-rule pivots for the given cost vector until optimal.
    // allow_artificial gates whether columns >= n may enter.
    void optimize(const Eigen::VectorXd& cost, bool allow_artificial) {
        for (int iter = 0; iter < 100000; ++iter) {
            const int enter = entering_column(cost, allow_artificial);
            if (enter < 0) return;
            const int leave = leaving_row(enter);
            if (leave < 0)
                throw NumericalError("simplex: unbounded objective");
            pivot(leave, enter);
        }
        throw NumericalError("simplex: iteration limit reached");
    }

    double objective(const Eigen::VectorXd& cost) const {
        double v = 0.0;
        for (int i = 0; i < m_; ++i) v += cost(basis_[i]) * t_(i, n_ + m_);
        return v;
    }

    // After phase 1, pivot basic artificials onto structural columns where
    // possible; rows that admit no pivot are redundant and keep a zero-valued
    // artificial, which is excluded from entering in phase 2.
    void drive_out_artificials() {
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] < n_) continue;
            for (int j = 0; j < n_; ++j) {
                if (std::abs(t_(i, j)) > tol_) {
                    pivot(i, j);
                    break;
                }
            }
        }
    }

    Eigen::VectorXd solution() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        for (int i = 0; i < m_; ++i)
            if (basis_[i] < n_) x(basis_[i]) = t_(i, n_ + m_);
        return x;
    }

    int n_structural() const { return n_; }
    int n_total() const { return n_ + m_; }

  private:
    int entering_column(const Eigen::VectorXd& cost, bool allow_artificial) const {
        const int limit = allow_artificial ? n_ + m_ : n_;
        for (int j = 0; j < limit; ++j) {
            if (is_basic(j)) continue;
            double z = cost(j);
            for (int i = 0; i < m_; ++i) z -= cost(basis_[i]) * t_(i, j);
            if (z < -tol_) return j;
        }
        return -1;
    }

    int leaving_row(int enter) const {
        int row = -1;
        double best = 0.0;
        for (int i = 0; i < m_; ++i) {
            if (t_(i, enter) <= tol_) continue;
            const double ratio = t_(i, n_ + m_) / t_(i, enter);
            if (row < 0 || ratio < best - tol_ ||
                (std::abs(ratio - best) <= tol_ && basis_[i] < basis_[row])) {
                row = i;
                best = ratio;
            }
        }
        return row;
    }

    bool is_basic(int j) const {
        for (int i = 0; i < m_; ++i)
            if (basis_[i] == j) return true;
        return false;
    }

    void pivot(int row, int col) {
        t_.row(row) /= t_(row, col);
        for (int i = 0; i < m_; ++i) {
            if (i == row) continue;
            if (t_(i, col) != 0.0) t_.row(i) -= t_(i, col) * t_.row(row);
        }
        basis_[row] = col;
    }

    int m_, n_;
    double tol_;
    Eigen::MatrixXd t_;
    std::vector<int> basis_;
};

}  // namespace detail

inline LpResult solve_lp_equality(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                  const Eigen::VectorXd& c, double tol = 1e-9) {
    if (a.rows() != b.size() || a.cols() != c.size())
        throw ConfigError("simplex: inconsistent program dimensions");
    if (a.rows() == 0 || a.cols() == 0) throw ConfigError("simplex: empty program");

    detail::SimplexTableau tab(a, b, tol);

    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(tab.n_total());
    phase1.tail(static_cast<int>(a.rows())).setOnes();
    tab.optimize(phase1, true);
    LpResult res;
    if (tab.objective(phase1) > tol * (1.0 + b.cwiseAbs().maxCoeff())) return res;
    tab.drive_out_artificials();

    Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(tab.n_total());
    phase2.head(static_cast<int>(a.cols())) = c;
    tab.optimize(phase2, false);

    res.feasible = true;
    res.x = tab.solution();
    res.objective = tab.objective(phase2);
    return res;
}

}  // namespace dpo
