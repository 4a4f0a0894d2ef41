#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <complex>

namespace mscg {

using cplx = std::complex<double>;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<double>;
using CSpMat = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<double>;
using CTriplet = Eigen::Triplet<cplx>;

inline constexpr double pi = 3.14159265358979323846;

} // namespace mscg
