// Rectangular analysis data: outcome, exposure, mediator, optional covariate block.
#pragma once

#include <Eigen/Core>
#include <string>

#include "medprod/common.hpp"

namespace medprod {

enum class CaseType { c1 = 1, c2 = 2, c3 = 3, c4 = 4 };

inline int case_number(CaseType c) { return static_cast<int>(c); }

// (binary Y?, binary M?) -> case: 1 = cont/cont, 2 = cont/bin, 3 = bin/cont, 4 = bin/bin.
inline CaseType case_from_flags(bool y_binary, bool m_binary) {
  if (!y_binary) return m_binary ? CaseType::c2 : CaseType::c1;
  return m_binary ? CaseType::c4 : CaseType::c3;
}

struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXd x;
  Eigen::VectorXd m;
  Eigen::MatrixXd w;  // n x p, p may be 0
  bool y_binary = false;
  bool m_binary = false;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return w.cols(); }

  void validate() const {
    const Eigen::Index nn = n();
    require(nn > 0, errc::invalid_argument, "dataset: no records");
    require(x.size() == nn && m.size() == nn && (w.size() == 0 || w.rows() == nn), errc::invalid_argument,
            "dataset: column lengths disagree");
    require(nn >= p() + 3, errc::invalid_argument,
            "dataset: needs more records than parameters (n >= p + 3)");
    auto all_finite = [](const auto& v) { return v.allFinite(); };
    require(all_finite(y) && all_finite(x) && all_finite(m) && (w.size() == 0 || w.allFinite()),
            errc::invalid_argument, "dataset: non-finite value");
    auto check_binary = [](const Eigen::VectorXd& v, const char* name) {
      for (Eigen::Index i = 0; i < v.size(); ++i)
        require(v[i] == 0.0 || v[i] == 1.0, errc::non_binary_value,
                std::string("dataset: ") + name + " declared binary but holds a non-{0,1} value");
    };
    if (y_binary) check_binary(y, "outcome");
    if (m_binary) check_binary(m, "mediator");
  }
};

inline CaseType case_of(const Dataset& d) { return case_from_flags(d.y_binary, d.m_binary); }

}  // namespace medprod
