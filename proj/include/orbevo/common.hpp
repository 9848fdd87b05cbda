#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace orbevo {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using cplx = std::complex<double>;

inline constexpr cplx I_UNIT{0.0, 1.0};

struct OrbevoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a direction vector has (near-)zero length.
struct DegenerateDirectionError : OrbevoError {
    using OrbevoError::OrbevoError;
};

/// Raised when a matrix fails the rotation-matrix check.
struct InvalidRotationError : OrbevoError {
    using OrbevoError::OrbevoError;
};

struct ShapeError : OrbevoError {
    using OrbevoError::OrbevoError;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw OrbevoError(msg);
}

}  // namespace orbevo
