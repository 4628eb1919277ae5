#include <catch2/catch.hpp>

#include <Eigen/Dense>
#include <complex>

#include "helpers.hpp"
#include "sgdflow/spectral.hpp"

using namespace sgdflow;

namespace {

Problem identity_problem(Eigen::Index d) {
    Problem p;
    p.a = Eigen::MatrixXd::Identity(d, d);
    p.b = Eigen::VectorXd::Ones(d);
    return p;
}

Eigen::MatrixXcd dense_resolvent(const Eigen::MatrixXd& m, std::complex<double> z) {
    const Eigen::Index n = m.rows();
    Eigen::MatrixXcd zi = z * Eigen::MatrixXcd::Identity(n, n) - m.cast<std::complex<double>>();
    return zi.inverse();
}

}  // namespace

TEST_CASE("decompose on the identity") {
    auto spec = decompose(identity_problem(2));
    REQUIRE(spec.singulars.size() == 2);
    CHECK(spec.singulars[0] == Approx(1.0));
    CHECK(spec.singulars[1] == Approx(1.0));
    CHECK(spec.eigenvalues[0] == Approx(1.0));
    CHECK(spec.eigenvalues[1] == Approx(1.0));
}

TEST_CASE("decompose on diag(2,1)") {
    Problem p;
    p.a = Eigen::Vector2d(2.0, 1.0).asDiagonal();
    p.b = Eigen::Vector2d(0.3, -0.4);
    auto spec = decompose(p);
    CHECK(spec.singulars[0] == Approx(2.0));
    CHECK(spec.singulars[1] == Approx(1.0));
    CHECK(spec.eigenvalues[0] == Approx(4.0));
    CHECK(spec.eigenvalues[1] == Approx(1.0));
}

TEST_CASE("decompose reconstructs a random 5x3 matrix") {
    Problem p;
    p.a = testutil::random_matrix(5, 3, 101);
    p.b = testutil::random_vector(5, 102);
    auto spec = decompose(p);

    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(5, 3);
    for (Eigen::Index j = 0; j < 3; ++j) sigma(j, j) = spec.singulars[j];
    const Eigen::MatrixXd rebuilt = spec.u_full * sigma * spec.v_full.transpose();
    CHECK((rebuilt - p.a).norm() / p.a.norm() <= 1e-10);

    // orthogonality of the full factors and of Uᵀb
    CHECK((spec.u_full.transpose() * spec.u_full - Eigen::MatrixXd::Identity(5, 5)).norm() <=
          1e-12);
    CHECK((spec.v_full.transpose() * spec.v_full - Eigen::MatrixXd::Identity(3, 3)).norm() <=
          1e-12);
    CHECK(std::abs(spec.b_spectral.norm() - p.b.norm()) <= 1e-12 * p.b.norm());

    for (Eigen::Index j = 0; j + 1 < spec.eigenvalues.size(); ++j)
        CHECK(spec.eigenvalues[j] >= spec.eigenvalues[j + 1]);
    CHECK(spec.eigenvalues.minCoeff() >= 0.0);
}

TEST_CASE("decompose is deterministic with a fixed sign convention") {
    Problem p;
    p.a = testutil::random_matrix(6, 4, 707);
    p.b = testutil::random_vector(6, 708);
    auto s1 = decompose(p);
    auto s2 = decompose(p);
    CHECK(s1.u_full == s2.u_full);
    CHECK(s1.v_full == s2.v_full);
    CHECK(s1.singulars == s2.singulars);
    for (Eigen::Index j = 0; j < s1.v_full.cols(); ++j) {
        for (Eigen::Index i = 0; i < s1.v_full.rows(); ++i) {
            if (std::abs(s1.v_full(i, j)) > 1e-12) {
                CHECK(s1.v_full(i, j) > 0.0);
                break;
            }
        }
    }
}

TEST_CASE("decompose validates input") {
    Problem p = identity_problem(2);
    p.b[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(decompose(p), std::invalid_argument);
    p = identity_problem(2);
    p.delta = -1.0;
    CHECK_THROWS_AS(decompose(p), std::invalid_argument);
}

TEST_CASE("loss and objective") {
    Problem p = identity_problem(2);
    p.b = Eigen::Vector2d(0.0, 0.0);
    CHECK(loss(p, Eigen::Vector2d(0.0, 0.0)) == 0.0);
    p.b = Eigen::Vector2d(1.0, 1.0);
    CHECK(loss(p, Eigen::Vector2d(0.0, 0.0)) == Approx(1.0));

    Problem q;
    q.a = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    q.b = Eigen::Vector2d(1.0, 2.0);
    CHECK(loss(q, Eigen::Vector2d(1.0, 1.0)) == Approx(0.0));

    // objective: delta = 0 means loss; scalar case; origin evaluation
    q.delta = 0.0;
    const Eigen::Vector2d x(0.3, -0.7);
    CHECK(objective(q, x) == Approx(loss(q, x)));
    Problem s;
    s.a = Eigen::MatrixXd::Identity(1, 1);
    s.b = Eigen::VectorXd::Zero(1);
    s.delta = 2.0;
    CHECK(objective(s, Eigen::VectorXd::Ones(1)) == Approx(1.5));
    Problem r = identity_problem(3);
    r.b = testutil::random_vector(3, 200);
    r.delta = 0.4;
    CHECK(objective(r, Eigen::VectorXd::Zero(3)) == Approx(0.5 * r.b.squaredNorm()));

    CHECK_THROWS_AS(loss(r, Eigen::VectorXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("loss is invariant in spectral coordinates") {
    Problem p = testutil::random_problem(7, 4, 0.2, 301);
    auto spec = decompose(p);
    for (int k = 0; k < 5; ++k) {
        const Eigen::VectorXd x = testutil::random_vector(4, 400 + k);
        const double lx = loss(p, x);
        const double lnu = spec.loss_spectral(spec.to_spectral(x));
        CHECK(std::abs(lx - lnu) <= 1e-10 * (1.0 + lx));
    }
}

TEST_CASE("resolvent entries on the identity spectrum") {
    auto spec = decompose(identity_problem(2));
    const auto r11 = resolvent_entry(spec, ResolventSide::rows, ComplexPoint{2.0, 0.0}, 0, 0);
    CHECK(r11.real() == Approx(1.0));
    CHECK(r11.imag() == Approx(0.0).margin(1e-15));
    const auto r12 = resolvent_entry(spec, ResolventSide::rows, ComplexPoint{2.0, 0.0}, 0, 1);
    CHECK(std::abs(r12) <= 1e-14);
}

TEST_CASE("resolvent matches dense complex inversion") {
    Problem p;
    p.a = testutil::random_matrix(4, 4, 515, 0.5);
    p.b = testutil::random_vector(4, 516);
    auto spec = decompose(p);
    const std::complex<double> z(3.0, 0.5);

    const Eigen::MatrixXcd rrows = dense_resolvent(p.a * p.a.transpose(), z);
    const Eigen::MatrixXcd rcols = dense_resolvent(p.a.transpose() * p.a, z);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) {
            const auto er = resolvent_entry(spec, ResolventSide::rows,
                                            ComplexPoint{z.real(), z.imag()}, i, j);
            const auto ec = resolvent_entry(spec, ResolventSide::columns,
                                            ComplexPoint{z.real(), z.imag()}, i, j);
            CHECK(std::abs(er - rrows(i, j)) <= 1e-10);
            CHECK(std::abs(ec - rcols(i, j)) <= 1e-10);
        }

    // vector form against the same oracle
    const Eigen::VectorXd v = testutil::random_vector(4, 517);
    const Eigen::VectorXcd rv = rrows * v.cast<std::complex<double>>();
    for (Eigen::Index i = 0; i < 4; ++i) {
        const auto e =
            resolvent_entry(spec, ResolventSide::rows, ComplexPoint{z.real(), z.imag()}, i, v);
        CHECK(std::abs(e - rv[i]) <= 1e-10);
    }
}

TEST_CASE("resolvent symmetry and difference identity") {
    Problem p;
    p.a = testutil::random_matrix(5, 5, 616, 0.4);
    p.b = testutil::random_vector(5, 617);
    auto spec = decompose(p);
    const ComplexPoint z{2.5, 0.7};
    const ComplexPoint y{-1.0, 0.3};

    Eigen::MatrixXcd rz(5, 5), ry(5, 5);
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = 0; j < 5; ++j) {
            rz(i, j) = resolvent_entry(spec, ResolventSide::rows, z, i, j);
            ry(i, j) = resolvent_entry(spec, ResolventSide::rows, y, i, j);
        }
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = 0; j < 5; ++j)
            CHECK(std::abs(rz(i, j) - rz(j, i)) <= 1e-12);

    const std::complex<double> dz = z.value() - y.value();
    const Eigen::MatrixXcd lhs = (rz - ry) / dz;
    const Eigen::MatrixXcd rhs = -(rz * ry);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("resolvent pole detection") {
    auto spec = decompose(identity_problem(2));
    CHECK_THROWS_AS(
        resolvent_entry(spec, ResolventSide::rows, ComplexPoint{1.0, 0.0}, 0, 0),
        std::domain_error);
    CHECK_THROWS_AS(
        resolvent_entry(spec, ResolventSide::rows, ComplexPoint{1.0 + 1e-13, 0.0}, 0, 0),
        std::domain_error);
}
