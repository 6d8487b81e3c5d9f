#ifndef RRL_DATASET_HPP
#define RRL_DATASET_HPP

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rrl/errors.hpp"
#include "rrl/matrix.hpp"
#include "rrl/nn.hpp"

namespace rrl {

// Demonstration dataset: M (state, action) pairs.
struct DemoDataset {
    Matrix states;   // M x F
    Matrix actions;  // M x act_dim

    std::size_t size() const { return states.rows; }
    std::size_t state_dim() const { return states.cols; }
    std::size_t action_dim() const { return actions.cols; }
};

// Columnar binary: magic "RRLDS1\0" (7 bytes), u32 M, u32 F, u32 act_dim,
// then states f64 row-major, then actions f64 row-major. Little-endian.
inline constexpr char kDatasetMagic[7] = {'R', 'R', 'L', 'D', 'S', '1', '\0'};

inline void dataset_save(const DemoDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("dataset_save: cannot open " + path);
    os.write(kDatasetMagic, 7);
    write_u32(os, static_cast<std::uint32_t>(ds.states.rows));
    write_u32(os, static_cast<std::uint32_t>(ds.states.cols));
    write_u32(os, static_cast<std::uint32_t>(ds.actions.cols));
    for (double v : ds.states.data) write_f64(os, v);
    for (double v : ds.actions.data) write_f64(os, v);
}

inline DemoDataset dataset_load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("dataset_load: cannot open " + path);
    char magic[7];
    is.read(magic, 7);
    if (!is || std::memcmp(magic, kDatasetMagic, 7) != 0)
        throw IoError("dataset_load: bad magic in " + path);
    const std::uint32_t m = read_u32(is);
    const std::uint32_t f = read_u32(is);
    const std::uint32_t a = read_u32(is);
    DemoDataset ds;
    ds.states = Matrix(m, f);
    ds.actions = Matrix(m, a);
    for (auto& v : ds.states.data) v = read_f64(is);
    for (auto& v : ds.actions.data) v = read_f64(is);
    return ds;
}

// CSV mirror with header s0..s{F-1},a0..a{act-1}
inline void dataset_save_csv(const DemoDataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("dataset_save_csv: cannot open " + path);
    for (std::size_t i = 0; i < ds.state_dim(); ++i) os << (i ? "," : "") << "s" << i;
    for (std::size_t i = 0; i < ds.action_dim(); ++i) os << ",a" << i;
    os << "\n";
    os.precision(17);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.state_dim(); ++c)
            os << (c ? "," : "") << ds.states(r, c);
        for (std::size_t c = 0; c < ds.action_dim(); ++c) os << "," << ds.actions(r, c);
        os << "\n";
    }
}

inline DemoDataset dataset_load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("dataset_load_csv: cannot open " + path);
    std::string header;
    if (!std::getline(is, header)) throw IoError("dataset_load_csv: empty file " + path);

    std::size_t f = 0, a = 0;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ',')) {
            if (!col.empty() && col[0] == 's') ++f;
            else if (!col.empty() && col[0] == 'a') ++a;
            else throw IoError("dataset_load_csv: bad header column '" + col + "'");
        }
    }
    if (f == 0) throw IoError("dataset_load_csv: no state columns");

    std::vector<double> svals, avals;
    std::string line;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            const double v = std::stod(cell);
            if (col < f) svals.push_back(v);
            else avals.push_back(v);
            ++col;
        }
        if (col != f + a) throw IoError("dataset_load_csv: row with wrong column count");
        ++rows;
    }
    DemoDataset ds;
    ds.states = Matrix(rows, f);
    ds.states.data = std::move(svals);
    ds.actions = Matrix(rows, a);
    ds.actions.data = std::move(avals);
    return ds;
}

} // namespace rrl

#endif
