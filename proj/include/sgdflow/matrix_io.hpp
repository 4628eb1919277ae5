// matrix_io.hpp — matrix file formats used by the experiment runner.
//
// CSV: one header line (column names are ignored, their count fixes the
// width), then comma-separated decimal floats, '.' decimal separator.
// Binary: 16-byte header of two little-endian u64 (rows, cols) followed by
// row-major 8-byte little-endian IEEE-754 doubles.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdflow {

enum class MatrixFormat { csv_with_header, raw_binary_f64_row_major };

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace detail

inline Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("parse error in '" + path + "' line 1: empty file");
    const std::size_t cols = detail::split_csv_line(line).size();
    if (cols == 0)
        throw std::runtime_error("parse error in '" + path + "' line 1: no columns");

    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != cols)
            throw std::runtime_error("parse error in '" + path + "' line " +
                                     std::to_string(line_no) + ": expected " +
                                     std::to_string(cols) + " fields, got " +
                                     std::to_string(fields.size()));
        for (const auto& f : fields) {
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(f, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("parse error in '" + path + "' line " +
                                         std::to_string(line_no) + ": bad number '" + f + "'");
            }
            if (pos != f.size() && f.find_first_not_of(" \t\r", pos) != std::string::npos)
                throw std::runtime_error("parse error in '" + path + "' line " +
                                         std::to_string(line_no) + ": bad number '" + f + "'");
            values.push_back(v);
        }
    }
    const std::size_t rows = values.size() / cols;
    if (rows == 0)
        throw std::runtime_error("parse error in '" + path + "': no data rows");
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = values[i * cols + j];
    return m;
}

inline Eigen::MatrixXd load_matrix_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::uint64_t rows = 0, cols = 0;
    unsigned char hdr[16];
    if (!in.read(reinterpret_cast<char*>(hdr), 16))
        throw std::runtime_error("parse error in '" + path + "': truncated header");
    for (int k = 0; k < 8; ++k) {
        rows |= static_cast<std::uint64_t>(hdr[k]) << (8 * k);
        cols |= static_cast<std::uint64_t>(hdr[8 + k]) << (8 * k);
    }
    if (rows == 0 || cols == 0)
        throw std::runtime_error("parse error in '" + path + "': zero dimension");
    Eigen::MatrixXd m(rows, cols);
    std::vector<double> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
        if (!in.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(cols * sizeof(double))))
            throw std::runtime_error("parse error in '" + path + "': truncated row " +
                                     std::to_string(i));
        for (std::uint64_t j = 0; j < cols; ++j) m(i, j) = row[j];
    }
    return m;
}

inline Eigen::MatrixXd load_matrix(const std::string& path, MatrixFormat fmt) {
    return fmt == MatrixFormat::csv_with_header ? load_matrix_csv(path)
                                                : load_matrix_binary(path);
}

inline void save_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << (j ? ",c" : "c") << j;
    out << "\n";
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            if (j) out << ',';
            out << buf;
        }
        out << "\n";
    }
}

inline void save_matrix_binary(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
    unsigned char hdr[16];
    for (int k = 0; k < 8; ++k) {
        hdr[k] = static_cast<unsigned char>((rows >> (8 * k)) & 0xFF);
        hdr[8 + k] = static_cast<unsigned char>((cols >> (8 * k)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(hdr), 16);
    std::vector<double> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
        for (std::uint64_t j = 0; j < cols; ++j) row[j] = m(i, j);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(cols * sizeof(double)));
    }
}

}  // namespace sgdflow
