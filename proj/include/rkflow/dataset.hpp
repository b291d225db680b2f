#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rkflow/embedding.hpp"
#include "rkflow/errors.hpp"
#include "rkflow/io.hpp"

namespace rkflow {

// Training data; samples are columns.  r0 is the largest input norm (the
// radius of the ball the inputs live in).
struct Dataset {
    Eigen::MatrixXd inputs;   // d x N
    Eigen::MatrixXd targets;  // d' x N
    double r0 = 0.0;

    int n() const { return static_cast<int>(inputs.cols()); }
    int d() const { return static_cast<int>(inputs.rows()); }
    int d_prime() const { return static_cast<int>(targets.rows()); }

    double separation() const { return rkflow::separation(inputs); }
};

inline Dataset make_dataset(Eigen::MatrixXd inputs, Eigen::MatrixXd targets) {
    if (inputs.cols() < 1 || inputs.cols() != targets.cols()) {
        throw invalid_input_error(
            "make_dataset: need N >= 1 inputs with matching targets");
    }
    Dataset data;
    data.inputs = std::move(inputs);
    data.targets = std::move(targets);
    data.r0 = data.inputs.colwise().norm().maxCoeff();
    return data;
}

inline void save_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path + " for writing");
    for (int i = 0; i < data.d(); ++i) os << (i ? "," : "") << "x" << (i + 1);
    for (int i = 0; i < data.d_prime(); ++i) os << ",y" << (i + 1);
    os << "\n";
    for (int c = 0; c < data.n(); ++c) {
        for (int i = 0; i < data.d(); ++i) {
            os << (i ? "," : "") << fmt17(data.inputs(i, c));
        }
        for (int i = 0; i < data.d_prime(); ++i) {
            os << "," << fmt17(data.targets(i, c));
        }
        os << "\n";
    }
    if (!os) throw io_error("write failed: " + path);
}

inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw io_error("empty dataset file: " + path);

    int d = 0, d_prime = 0;
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) {
            if (cell.rfind("x", 0) == 0 && d_prime == 0) {
                ++d;
            } else if (cell.rfind("y", 0) == 0) {
                ++d_prime;
            } else {
                throw io_error("malformed dataset header column: " + cell);
            }
        }
    }
    if (d < 1 || d_prime < 1) throw io_error("dataset header must list x and y columns");

    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
        }
        if (static_cast<int>(values.size()) != d + d_prime) {
            throw io_error("dataset row has wrong arity in " + path);
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw io_error("dataset has no samples: " + path);

    Eigen::MatrixXd inputs(d, rows.size());
    Eigen::MatrixXd targets(d_prime, rows.size());
    for (std::size_t c = 0; c < rows.size(); ++c) {
        for (int i = 0; i < d; ++i) inputs(i, c) = rows[c][i];
        for (int i = 0; i < d_prime; ++i) targets(i, c) = rows[c][d + i];
    }
    return make_dataset(std::move(inputs), std::move(targets));
}

}  // namespace rkflow
