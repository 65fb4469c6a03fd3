#pragma once

#include <random>

#include "dnet/forms.hpp"

namespace dnet {

struct Signature {
    int p = 0, q = 0;
    int n() const { return p + q; }
    bool operator==(const Signature&) const = default;
};

// R^n with a nondegenerate symmetric bilinear form G; the standard case is diag(+1^p, -1^q).
class Space {
public:
    Space() = default;
    explicit Space(Signature s) : sig_(s), G_(Mat::Zero(s.n(), s.n())) {
        for (int a = 0; a < s.n(); ++a) G_(a, a) = a < s.p ? 1.0 : -1.0;
        Ginv_ = G_;
    }
    explicit Space(const Mat& G) : G_(G), Ginv_(G.inverse()) {
        Eigen::SelfAdjointEigenSolver<Mat> es(G);
        for (int a = 0; a < G.rows(); ++a) (es.eigenvalues()[a] > 0 ? sig_.p : sig_.q)++;
    }

    Signature signature() const { return sig_; }
    int n() const { return static_cast<int>(G_.rows()); }
    const Mat& metric() const { return G_; }

    double ip(const Vec& v, const Vec& w) const { return v.dot(G_ * w); }
    double sq(const Vec& v) const { return ip(v, v); }

    // |(v,v)| <= tol * |v|^2 in the Euclidean norm of the coordinates
    bool is_null(const Vec& v, double tol = 1e-10) const { return std::abs(sq(v)) <= tol * v.squaredNorm(); }

    // matrix of z -> (x^y)(z) = (x,z)y - (y,z)x extended linearly
    Mat bivector_matrix(const Vec& B) const { return -bivector_to_antisymmetric(B) * G_; }

    Vec act(const Vec& B, const Vec& z) const { return bivector_matrix(B) * z; }

    Vec matrix_to_bivector(const Mat& M) const {
        Mat A = -M * Ginv_;
        const int d = n();
        Vec B(lambda2_dim(d));
        for (int a = 0; a < d; ++a)
            for (int b = a + 1; b < d; ++b) B[lambda2_index(a, b, d)] = 0.5 * (A(a, b) - A(b, a));
        return B;
    }

    // max |(Mv,Mw) - (v,w)| over the standard basis
    double orthogonality_residual(const Mat& M) const { return (M.transpose() * G_ * M - G_).cwiseAbs().maxCoeff(); }

private:
    Signature sig_;
    Mat G_;
    Mat Ginv_;
};

inline Vec normalize_line(const Vec& v) {
    Vec u = v.normalized();
    for (int a = 0; a < u.size(); ++a)
        if (std::abs(u[a]) > 1e-14) {
            if (u[a] < 0) u = -u;
            break;
        }
    return u;
}

// chord distance between the unit directions, minimized over sign
inline double line_distance(const Vec& u, const Vec& v) {
    Vec a = u.normalized(), b = v.normalized();
    return std::min((a - b).norm(), (a + b).norm());
}

inline bool same_line(const Vec& u, const Vec& v, double tol = 1e-9) { return line_distance(u, v) <= tol; }

// Operator-norm distance between the Euclidean orthoprojectors onto two column spans.
inline double subspace_distance(const Mat& A, const Mat& B) {
    auto proj = [](const Mat& X) {
        Eigen::HouseholderQR<Mat> qr(X);
        Mat Q = qr.householderQ() * Mat::Identity(X.rows(), X.cols());
        return Mat(Q * Q.transpose());
    };
    Eigen::JacobiSVD<Mat> svd(proj(A) - proj(B));
    return svd.singularValues()[0];
}

// Light-cone frame: o, q null with (o,q) = -1, optional p with (p,p) = -1 orthogonal to both.
// `basis` spans R^{p,q} = <o,q>^perp; with p present its last column is p.
class Frame {
public:
    Frame() = default;

    static Frame standard(Signature ambient) {
        if (ambient.p < 1 || ambient.q < 1) throw Error(Errc::frame, "ambient space needs signature (p+1,q+1) with p,q >= 0");
        Frame f;
        f.space_ = Space(ambient);
        const int n = ambient.n(), P = ambient.p;
        f.o_ = Vec::Zero(n);
        f.q_ = Vec::Zero(n);
        f.o_[P - 1] = 0.5;
        f.o_[n - 1] = 0.5;
        f.q_[P - 1] = -1;
        f.q_[n - 1] = 1;
        if (ambient.q >= 2) {
            f.p_ = Vec::Zero(n);
            f.p_[P] = 1;
        }
        f.basis_ = Mat::Zero(n, n - 2);
        int c = 0;
        for (int a = 0; a < P - 1; ++a) f.basis_(a, c++) = 1;
        for (int a = P; a < n - 1; ++a) f.basis_(a, c++) = 1;
        f.verify();
        return f;
    }

    // Frame from stored vectors; p may be empty.
    static Frame from_vectors(const Space& s, const Vec& o, const Vec& q, const Vec& p, const Mat& basis, double tol = 1e-9) {
        Frame f;
        f.space_ = s;
        f.o_ = o;
        f.q_ = q;
        f.p_ = p;
        f.basis_ = basis;
        if (o.size() != s.n() || q.size() != s.n() || (p.size() && p.size() != s.n()) || basis.rows() != s.n() || basis.cols() != s.n() - 2)
            throw Error(Errc::frame, "frame vectors do not match the ambient dimension");
        f.verify(tol);
        return f;
    }

    // Image of this frame under an orthogonal map A of the ambient space.
    Frame transformed(const Mat& A) const {
        if (space_.orthogonality_residual(A) > 1e-9) throw Error(Errc::frame, "frame transform is not orthogonal");
        Frame f = *this;
        f.o_ = A * o_;
        f.q_ = A * q_;
        if (p_.size()) f.p_ = A * p_;
        f.basis_ = A * basis_;
        f.verify(1e-9 * A.squaredNorm());
        return f;
    }

    // Random orthogonal map: a product of reflections in non-null vectors.
    static Mat random_orthogonal(const Space& s, std::mt19937_64& rng, int reflections = 6) {
        std::normal_distribution<double> n;
        Mat A = Mat::Identity(s.n(), s.n());
        for (int r = 0; r < reflections; ++r) {
            Vec v(s.n());
            do {
                for (int a = 0; a < s.n(); ++a) v[a] = n(rng);
            } while (std::abs(s.sq(v)) < 0.5 * v.squaredNorm());
            Mat R = Mat::Identity(s.n(), s.n()) - 2.0 / s.sq(v) * v * (s.metric() * v).transpose();
            A = R * A;
        }
        return A;
    }

    const Space& space() const { return space_; }
    const Vec& o() const { return o_; }
    const Vec& q() const { return q_; }
    const Vec& p() const {
        if (!p_.size()) throw Error(Errc::frame, "frame has no point sphere complex");
        return p_;
    }
    bool has_p() const { return p_.size() > 0; }
    const Mat& basis() const { return basis_; }

    double ip(const Vec& v, const Vec& w) const { return space_.ip(v, w); }

    // orthoprojection onto <o,q>^perp
    Vec pi(const Vec& v) const { return v + ip(v, q_) * o_ + ip(v, o_) * q_; }

    Vec stereo_lift(const Vec& x) const {
        if (std::abs(ip(x, o_)) > 1e-12 * (1 + x.norm()) || std::abs(ip(x, q_)) > 1e-12 * (1 + x.norm()))
            throw Error(Errc::domain, "point is not orthogonal to the frame plane");
        return o_ + x + 0.5 * ip(x, x) * q_;
    }

    // representative with (y,q) = -1
    Vec euclidean_lift(const Vec& s, double tol = 1e-10) const {
        double c = ip(s, q_);
        if (std::abs(c) <= tol * s.norm() * q_.norm()) throw Error(Errc::point_at_infinity, "null line lies in q^perp");
        return -s / c;
    }

    Vec stereo_project(const Vec& s) const { return pi(euclidean_lift(s)); }

    // add the multiple of q that makes v null (exact since q is null)
    Vec to_lightcone(const Vec& v) const {
        double c = ip(v, q_);
        if (std::abs(c) < 1e-14 * v.norm()) throw Error(Errc::degeneracy, "cannot restore nullity along q");
        return v - space_.sq(v) / (2 * c) * q_;
    }

    // coordinates of x in R^{p,q} with respect to `basis`, and back
    Vec coords(const Vec& x) const {
        Mat Gb = basis_.transpose() * space_.metric() * basis_;
        return Gb.ldlt().solve(basis_.transpose() * space_.metric() * x);
    }
    Vec from_coords(const Vec& c) const { return basis_ * c; }

    void verify(double tol = 1e-12) const {
        auto bad = [&](double v, double want) { return std::abs(v - want) > tol; };
        if (bad(ip(o_, o_), 0) || bad(ip(q_, q_), 0) || bad(ip(o_, q_), -1)) throw Error(Errc::frame, "o, q must be null with (o,q) = -1");
        if (p_.size() && (bad(ip(p_, p_), -1) || bad(ip(p_, o_), 0) || bad(ip(p_, q_), 0)))
            throw Error(Errc::frame, "p must be unit timelike and orthogonal to o, q");
    }

private:
    Space space_;
    Vec o_, q_, p_;
    Mat basis_;
};

// exp(t mu'^mu) = I + t(mu'^mu) for null, mutually orthogonal mu, mu'.
inline Mat isotropic_exp(const Space& s, const Vec& mu1, const Vec& mu0, double t, double tol = 1e-10) {
    double scale = mu1.squaredNorm() + mu0.squaredNorm();
    if (std::abs(s.sq(mu1)) > tol * scale || std::abs(s.sq(mu0)) > tol * scale || std::abs(s.ip(mu1, mu0)) > tol * scale)
        throw Error(Errc::degeneracy, "bivector is not isotropic; exp(tB) is not I + tB");
    return Mat::Identity(s.n(), s.n()) + t * s.bivector_matrix(wedge(mu1, mu0));
}

// lambda on <sj>, 1/lambda on <si>, identity on (<si> + <sj>)^perp.
inline Mat gamma_lambda(const Space& s, const Vec& si, const Vec& sj, double lambda, double tol = 1e-10) {
    if (lambda == 0) throw Error(Errc::domain, "gamma_lambda needs lambda != 0");
    double c = s.ip(si, sj);
    if (std::abs(c) <= tol * si.norm() * sj.norm()) throw Error(Errc::orthogonal_lines, "lines are orthogonal");
    const Mat& G = s.metric();
    return Mat::Identity(s.n(), s.n()) + (1.0 / lambda - 1.0) / c * si * (G * sj).transpose() + (lambda - 1.0) / c * sj * (G * si).transpose();
}

} // namespace dnet
