#include "calibkit/sml.hpp"

#include "calibkit/error.hpp"

#include <algorithm>

namespace calibkit {

namespace {
constexpr double kZeroCovariance = 1e-12;
}

Matrix prediction_matrix(const Matrix& member_scores) {
    return member_scores.unaryExpr([](double s) { return s >= 0.0 ? 1.0 : -1.0; });
}

Matrix prediction_matrix(std::span<const WarModel> models, const Matrix& unlabeled) {
    if (models.empty()) throw Error(ErrorKind::InvalidParameter, "prediction matrix needs at least one model");
    Matrix scores(static_cast<Eigen::Index>(models.size()), unlabeled.rows());
    for (std::size_t z = 0; z < models.size(); ++z)
        scores.row(static_cast<Eigen::Index>(z)) = predict(models[z], unlabeled).transpose();
    return prediction_matrix(scores);
}

SmlEstimate sml_from_covariance(const Matrix& Q) {
    if (Q.rows() != Q.cols() || Q.rows() == 0)
        throw Error(ErrorKind::DimensionMismatch, "covariance must be square and non-empty");
    SmlEstimate est;
    est.Q = Q;
    const Eigen::Index Z = Q.rows();
    if (Q.cwiseAbs().maxCoeff() < kZeroCovariance) {
        est.degenerate = true;
        est.v = Vector::Zero(Z);
        est.pi = Vector::Constant(Z, 0.5);
        return est;
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(Q);
    est.v = eig.eigenvectors().col(Z - 1).normalized();
    if (est.v.sum() < 0.0) est.v = -est.v;
    est.pi = ((est.v.array() + 1.0) / 2.0).cwiseMax(0.0).cwiseMin(1.0).matrix();
    return est;
}

SmlEstimate sml_weights(const Matrix& P) {
    const Eigen::Index Z = P.rows();
    const Eigen::Index m = P.cols();
    if (Z == 0) throw Error(ErrorKind::InvalidParameter, "SML needs at least one classifier");
    if (Z == 1) {
        SmlEstimate est;
        est.Q = Matrix::Zero(1, 1);
        if (m > 0) {
            const double mu = P.mean();
            est.Q(0, 0) = (P.array() - mu).square().mean();
        }
        est.v = Vector::Ones(1);
        est.pi = Vector::Ones(1);
        return est;
    }
    if (m < 2) {
        SmlEstimate est;
        est.Q = Matrix::Zero(Z, Z);
        est.v = Vector::Zero(Z);
        est.pi = Vector::Constant(Z, 0.5);
        est.degenerate = true;
        return est;
    }
    const Matrix centered = P.colwise() - P.rowwise().mean();
    const Matrix Q = centered * centered.transpose() / static_cast<double>(m);
    return sml_from_covariance(Q);
}

FusedClassifier fuse_sml(std::vector<WarModel> models, const Vector& pi) {
    if (static_cast<Eigen::Index>(models.size()) != pi.size())
        throw Error(ErrorKind::DimensionMismatch, std::to_string(models.size()) + " models but " +
                                                      std::to_string(pi.size()) + " weights");
    return {std::move(models), pi};
}

Vector fusion_weights(const SmlEstimate& estimate, const Vector& fallback) {
    return estimate.degenerate ? fallback : estimate.pi;
}

}  // namespace calibkit
