#pragma once

// JSON serialization of matrices, tuples and Taylor coefficients.
// Matrices are dense row-major with a dimension header; rational entries are
// "p/q" strings, complex entries are numbers (real) or [re, im] pairs.

#include "kchar/charfn.hpp"
#include "kchar/kernel_spec.hpp"
#include "kchar/operator_tuple.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace kchar {

inline Json matrix_to_json(const MatQ& A) {
    Json data = Json::array();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) data.push_back(to_string(A(i, j)));
    return Json{{"rows", A.rows()}, {"cols", A.cols()}, {"data", data}};
}

inline Json matrix_to_json(const MatC& A) {
    bool real = true;
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            if (A(i, j).imag() != 0.0) real = false;
    Json data = Json::array();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            if (real)
                data.push_back(A(i, j).real());
            else
                data.push_back(Json::array({A(i, j).real(), A(i, j).imag()}));
        }
    return Json{{"rows", A.rows()}, {"cols", A.cols()}, {"data", data}};
}

inline MatC matrix_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw SpecError("matrix needs rows, cols and data");
    const int rows = j.at("rows").get<int>(), cols = j.at("cols").get<int>();
    const Json& data = j.at("data");
    if (!data.is_array() || static_cast<int>(data.size()) != rows * cols) throw SpecError("matrix data has the wrong length");
    MatC A(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) {
            const Json& e = data[static_cast<std::size_t>(i * cols + c)];
            if (e.is_number())
                A(i, c) = Complex(e.get<double>(), 0.0);
            else if (e.is_string())
                A(i, c) = Complex(to_double(parse_rational(e.get<std::string>())), 0.0);
            else if (e.is_array() && e.size() == 2)
                A(i, c) = Complex(e[0].get<double>(), e[1].get<double>());
            else
                throw SpecError("unsupported matrix entry");
        }
    return A;
}

template <class S>
Json tuple_to_json(const OperatorTuple<S>& T) {
    Json ops = Json::array();
    for (const auto& A : T.ops()) ops.push_back(matrix_to_json(A));
    Json out{{"d", T.dim()}, {"n", T.size()}, {"matrices", ops}};
    if (!T.labels().empty()) {
        Json labels = Json::array();
        for (const auto& a : T.labels()) labels.push_back(a.entries());
        out["basis_labels"] = labels;
    }
    if constexpr (is_exact_v<S>) {
        if (!T.weights().empty()) {
            Json w = Json::array();
            for (const auto& x : T.weights()) w.push_back(to_string(x));
            out["gram_weights"] = w;
        }
    }
    return out;
}

/// Float tuple in an orthonormal basis.
inline TupleC tuple_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("matrices") || !j.at("matrices").is_array())
        throw SpecError("tuple spec needs an array 'matrices'");
    std::vector<MatC> ops;
    for (const auto& m : j.at("matrices")) ops.push_back(matrix_from_json(m));
    std::vector<MultiIndex> labels;
    if (j.contains("basis_labels"))
        for (const auto& l : j.at("basis_labels")) labels.emplace_back(l.get<std::vector<int>>());
    try {
        return TupleC(std::move(ops), std::move(labels));
    } catch (const std::invalid_argument& e) {
        throw SpecError(e.what());
    }
}

inline TupleC load_tuple(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open tuple spec '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw SpecError("malformed JSON in '" + path + "': " + e.what());
    }
    return tuple_from_json(j);
}

/// Taylor coefficients with |theta_gamma| above the threshold.
inline Json theta_to_json(const CharFnData& C, double threshold = 1e-13) {
    Json coeffs = Json::array();
    for (int i = 0; i < C.theta_index.size(); ++i) {
        const MatC& th = C.theta[static_cast<std::size_t>(i)];
        if (th.size() == 0 || th.cwiseAbs().maxCoeff() <= threshold) continue;
        coeffs.push_back(Json{{"gamma", C.theta_index[i].entries()}, {"matrix", matrix_to_json(th)}});
    }
    return Json{{"ran_delta_dim", C.r}, {"input_dim", C.x_dim}, {"cap", C.cap}, {"nilpotency", C.p},
                {"degree", C.theta_degree}, {"coefficients", coeffs}};
}

}  // namespace kchar
