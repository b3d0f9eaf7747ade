#include "merit/graph.hpp"

#include "merit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

namespace merit {
namespace {

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        const std::size_t b = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
        if (i > b) out.push_back(s.substr(b, i - b));
    }
    return out;
}

template <class T>
T parse_number(std::string_view tok, const std::filesystem::path& path, std::size_t line) {
    T value{};
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError(path.string(), line, "cannot parse '" + std::string(tok) + "'");
    return value;
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::size_t> parse_index_list(std::string_view rest, const std::filesystem::path& path,
                                          std::size_t line) {
    std::vector<std::size_t> out;
    for (auto tok : split_ws(rest)) out.push_back(parse_number<std::size_t>(tok, path, line));
    return out;
}

}  // namespace

void DataSplit::validate(std::size_t n) const {
    std::vector<char> seen(n, 0);
    for (const auto* set : {&train_idx, &val_idx, &test_idx}) {
        for (auto i : *set) {
            if (i >= n)
                throw ValidationError("split index " + std::to_string(i) + " out of range for " +
                                      std::to_string(n) + " nodes");
            if (seen[i]) throw ValidationError("split sets overlap at node " + std::to_string(i));
            seen[i] = 1;
        }
    }
}

int Graph::num_classes() const {
    if (!labels || labels->empty()) return 0;
    return *std::max_element(labels->begin(), labels->end()) + 1;
}

void Graph::validate() const {
    const std::size_t n = num_nodes();
    if (adjacency.rows() != adjacency.cols())
        throw ValidationError("adjacency is not square");
    if (static_cast<std::size_t>(features.rows()) != n)
        throw ValidationError("feature rows (" + std::to_string(features.rows()) +
                              ") != adjacency size (" + std::to_string(n) + ")");
    if (!features.allFinite()) throw ValidationError("features contain non-finite values");
    if (!adjacency.is_symmetric()) throw ValidationError("adjacency is not symmetric");
    for (std::size_t i = 0; i < n; ++i)
        if (adjacency.contains(i, i)) throw ValidationError("adjacency has a self loop");
    if (labels) {
        if (labels->size() != n)
            throw ValidationError("label count (" + std::to_string(labels->size()) +
                                  ") != node count (" + std::to_string(n) + ")");
        for (int y : *labels)
            if (y < 0) throw ValidationError("negative class id");
    }
    if (split) split->validate(n);
}

SparseMatrix adjacency_from_edges(std::size_t n, const std::vector<Triplet>& edges) {
    std::vector<Triplet> both;
    both.reserve(edges.size() * 2);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : edges) {
        if (e.row >= n || e.col >= n)
            throw ValidationError("edge (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                                  ") references a node >= " + std::to_string(n));
        if (e.row == e.col) continue;
        const auto key = std::minmax(e.row, e.col);
        if (!seen.insert(key).second) continue;
        both.push_back({e.row, e.col, e.value});
        both.push_back({e.col, e.row, e.value});
    }
    return SparseMatrix::from_triplets(n, n, std::move(both));
}

DenseMatrix load_dense(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    std::size_t rows = 0, cols = 0;
    bool have_header = false;
    DenseMatrix m;
    std::size_t r = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto toks = split_ws(t);
        if (!have_header) {
            if (toks.size() != 2) throw ParseError(path.string(), line_no, "expected header `N D`");
            rows = parse_number<std::size_t>(toks[0], path, line_no);
            cols = parse_number<std::size_t>(toks[1], path, line_no);
            m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            have_header = true;
            continue;
        }
        if (r >= rows) throw ParseError(path.string(), line_no, "more rows than declared");
        if (toks.size() != cols)
            throw ParseError(path.string(), line_no,
                             "expected " + std::to_string(cols) + " values, got " +
                                 std::to_string(toks.size()));
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = parse_number<double>(toks[c], path, line_no);
            if (!std::isfinite(v)) throw ParseError(path.string(), line_no, "non-finite value");
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
        ++r;
    }
    if (!have_header) throw ParseError(path.string(), line_no, "missing header `N D`");
    if (r != rows)
        throw ParseError(path.string(), line_no,
                         "declared " + std::to_string(rows) + " rows, found " + std::to_string(r));
    return m;
}

std::vector<int> load_labels(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        labels.push_back(parse_number<int>(t, path, line_no));
    }
    return labels;
}

DataSplit load_split(const std::filesystem::path& path) {
    auto in = open_in(path);
    DataSplit split;
    bool got[3] = {false, false, false};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto colon = t.find(':');
        if (colon == std::string_view::npos)
            throw ParseError(path.string(), line_no, "expected `train:`, `val:` or `test:`");
        const auto key = trim(t.substr(0, colon));
        auto idx = parse_index_list(t.substr(colon + 1), path, line_no);
        int slot = key == "train" ? 0 : key == "val" ? 1 : key == "test" ? 2 : -1;
        if (slot < 0) throw ParseError(path.string(), line_no, "unknown split '" + std::string(key) + "'");
        if (got[slot]) throw ParseError(path.string(), line_no, "duplicate split '" + std::string(key) + "'");
        got[slot] = true;
        (slot == 0 ? split.train_idx : slot == 1 ? split.val_idx : split.test_idx) = std::move(idx);
    }
    if (!(got[0] && got[1] && got[2]))
        throw ParseError(path.string(), line_no, "split file needs train, val and test lines");
    return split;
}

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::optional<std::filesystem::path>& label_path) {
    Graph g;
    g.features = load_dense(feature_path);
    const auto n = static_cast<std::size_t>(g.features.rows());

    auto in = open_in(edge_path);
    std::vector<Triplet> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto toks = split_ws(t);
        if (toks.size() != 2 && toks.size() != 3)
            throw ParseError(edge_path.string(), line_no, "expected `src<TAB>dst[<TAB>weight]`");
        const auto src = parse_number<std::size_t>(toks[0], edge_path, line_no);
        const auto dst = parse_number<std::size_t>(toks[1], edge_path, line_no);
        const double w = toks.size() == 3 ? parse_number<double>(toks[2], edge_path, line_no) : 1.0;
        if (src >= n || dst >= n)
            throw ValidationError(edge_path.string() + ":" + std::to_string(line_no) + ": node id " +
                                  std::to_string(std::max(src, dst)) + " >= N = " + std::to_string(n));
        edges.push_back({src, dst, w});
    }
    g.adjacency = adjacency_from_edges(n, edges);

    if (label_path) {
        g.labels = load_labels(*label_path);
        if (g.labels->size() != n)
            throw ValidationError(label_path->string() + ": " + std::to_string(g.labels->size()) +
                                  " labels for " + std::to_string(n) + " nodes");
    }
    g.validate();
    return g;
}

void save_edges(const SparseMatrix& adjacency, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (std::size_t r = 0; r < adjacency.rows(); ++r) {
        const auto cols = adjacency.row_cols(r);
        const auto vals = adjacency.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (cols[k] <= r) continue;
            out << r << '\t' << cols[k];
            if (vals[k] != 1.0) out << '\t' << format_real(vals[k]);
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void save_dense(const DenseMatrix& m, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << m.rows() << ' ' << m.cols() << '\n';
    std::string row;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        row.clear();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) row += ' ';
            row += format_real(m(i, j));
        }
        row += '\n';
        out << row;
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void save_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (int y : labels) out << y << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void save_split(const DataSplit& split, const std::filesystem::path& path) {
    auto out = open_out(path);
    auto line = [&](const char* key, const std::vector<std::size_t>& idx) {
        out << key << ':';
        for (auto i : idx) out << ' ' << i;
        out << '\n';
    };
    line("train", split.train_idx);
    line("val", split.val_idx);
    line("test", split.test_idx);
    if (!out) throw IoError("write failed: " + path.string());
}

DatasetPaths DatasetPaths::in(const std::filesystem::path& dir) {
    return {dir / "edges.tsv", dir / "features.txt", dir / "labels.txt", dir / "split.txt"};
}

Graph load_dataset(const std::filesystem::path& dir) {
    const auto p = DatasetPaths::in(dir);
    if (!std::filesystem::exists(p.edges)) throw IoError("missing edge file " + p.edges.string());
    if (!std::filesystem::exists(p.features))
        throw IoError("missing feature file " + p.features.string());
    std::optional<std::filesystem::path> labels;
    if (std::filesystem::exists(p.labels)) labels = p.labels;
    Graph g = load_graph(p.edges, p.features, labels);
    if (std::filesystem::exists(p.split)) {
        g.split = load_split(p.split);
        g.split->validate(g.num_nodes());
    }
    return g;
}

void save_dataset(const Graph& g, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto p = DatasetPaths::in(dir);
    save_edges(g.adjacency, p.edges);
    save_dense(g.features, p.features);
    if (g.labels) save_labels(*g.labels, p.labels);
    if (g.split) save_split(*g.split, p.split);
}

}  // namespace merit
