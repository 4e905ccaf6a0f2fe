#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "srsrr/error.hpp"
#include "srsrr/io.hpp"
#include "srsrr/linalg.hpp"

namespace srsrr {

enum class PopulationMode { oracle, analysis };

enum class Block { W = 0, X = 1, E = 2, C = 3 };

inline const char* block_prefix(Block b) {
    switch (b) {
        case Block::W: return "w";
        case Block::X: return "x";
        case Block::E: return "e";
        case Block::C: return "c";
    }
    return "?";
}

// Names and dimensions of the four covariate blocks, plus which outcome
// columns the file carries. A dimension of zero means the block is absent.
struct CovariateSchema {
    PopulationMode mode = PopulationMode::oracle;
    int j1 = 0, j2 = 0, j3 = 0, j4 = 0;

    int dim(Block b) const {
        switch (b) {
            case Block::W: return j1;
            case Block::X: return j2;
            case Block::E: return j3;
            case Block::C: return j4;
        }
        return 0;
    }

    bool adjustment_declared() const { return j3 > 0 || j4 > 0; }

    static CovariateSchema from_json(const json& j, const std::string& context) {
        ensure_keys(j, {"schema_version", "mode", "j1", "j2", "j3", "j4"}, context);
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != 1)
            throw ConfigError(context + ": schema_version must be 1");
        CovariateSchema s;
        const std::string mode = j.value("mode", "oracle");
        if (mode == "oracle") s.mode = PopulationMode::oracle;
        else if (mode == "analysis") s.mode = PopulationMode::analysis;
        else throw ConfigError(context + ": mode must be 'oracle' or 'analysis'");
        s.j1 = j.value("j1", 0);
        s.j2 = j.value("j2", 0);
        s.j3 = j.value("j3", 0);
        s.j4 = j.value("j4", 0);
        if (s.j1 < 0 || s.j2 < 0 || s.j3 < 0 || s.j4 < 0)
            throw ConfigError(context + ": block dimensions must be nonnegative");
        return s;
    }

    static CovariateSchema from_json_file(const std::string& path) {
        return from_json(read_json_file(path), path);
    }

    json to_json() const {
        return json{{"schema_version", 1},
                    {"mode", mode == PopulationMode::oracle ? "oracle" : "analysis"},
                    {"j1", j1}, {"j2", j2}, {"j3", j3}, {"j4", j4}};
    }
};

// Immutable finite population: unit order preserved from the source file,
// strata indexed in order of first appearance. Covariate blocks are stored
// as flat row-major arrays.
class Population {
public:
    struct ZeroVarianceFlag {
        Block block;
        int column;
    };

    int size() const { return static_cast<int>(stratum_of_.size()); }
    int num_strata() const { return static_cast<int>(strata_.size()); }
    const CovariateSchema& schema() const { return schema_; }
    PopulationMode mode() const { return schema_.mode; }

    const std::string& unit_id(int i) const { return unit_ids_[i]; }
    int stratum_of(int i) const { return stratum_of_[i]; }
    const std::string& stratum_label(int k) const { return stratum_labels_[k]; }
    const std::vector<int>& stratum_units(int k) const { return strata_[k]; }
    int stratum_size(int k) const { return static_cast<int>(strata_[k].size()); }
    double stratum_share(int k) const {  // Pi_[k]
        return static_cast<double>(strata_[k].size()) / size();
    }

    int dim(Block b) const { return schema_.dim(b); }
    double covariate(int i, Block b, int j) const { return block_data(b)[i * dim(b) + j]; }
    const double* covariate_row(int i, Block b) const { return block_data(b).data() + i * dim(b); }
    bool block_complete(Block b) const { return block_complete_[static_cast<int>(b)]; }

    bool has_potential_outcomes() const { return !y1_.empty(); }
    double y1(int i) const { return y1_[i]; }
    double y0(int i) const { return y0_[i]; }
    double unit_tau(int i) const { return y1_[i] - y0_[i]; }

    bool has_observed_data() const { return !z_obs_.empty(); }
    int z_obs(int i) const { return z_obs_[i]; }
    int t_obs(int i) const { return t_obs_[i]; }
    double y_obs(int i) const { return y_obs_[i]; }

    const std::vector<ZeroVarianceFlag>& zero_variance_flags() const { return zero_variance_; }

    // Average treatment effect over the full population (oracle mode).
    double true_tau() const {
        if (!has_potential_outcomes())
            throw ValidationError("true_tau requires potential outcomes");
        double s = 0.0;
        for (int i = 0; i < size(); ++i) s += unit_tau(i);
        return s / size();
    }

    // Single-stratum view of the same units; the degenerate case used by
    // the non-stratified (complete randomization) designs.
    Population collapse_strata(const std::string& label = "all") const {
        Population p(*this);
        p.stratum_labels_ = {label};
        p.stratum_of_.assign(size(), 0);
        p.strata_.clear();
        std::vector<int> all(size());
        for (int i = 0; i < size(); ++i) all[i] = i;
        p.strata_.push_back(std::move(all));
        return p;
    }

    friend class PopulationBuilder;

private:
    Population() = default;

    const std::vector<double>& block_data(Block b) const {
        switch (b) {
            case Block::W: return w_;
            case Block::X: return x_;
            case Block::E: return e_;
            case Block::C: return c_;
        }
        return w_;
    }

    CovariateSchema schema_;
    std::vector<std::string> unit_ids_;
    std::vector<int> stratum_of_;
    std::vector<std::string> stratum_labels_;
    std::vector<std::vector<int>> strata_;
    std::vector<double> w_, x_, e_, c_;
    std::vector<double> y1_, y0_;
    std::vector<int> z_obs_, t_obs_;
    std::vector<double> y_obs_;
    bool block_complete_[4] = {true, true, true, true};
    std::vector<ZeroVarianceFlag> zero_variance_;
};

// Accumulates rows, then validates every population invariant in build().
class PopulationBuilder {
public:
    explicit PopulationBuilder(const CovariateSchema& schema) { pop_.schema_ = schema; }

    PopulationBuilder& add_oracle_unit(const std::string& id, const std::string& stratum,
                                       const Vector& w, const Vector& x, const Vector& e,
                                       const Vector& c, double y1, double y0) {
        add_common(id, stratum, w, x, e, c);
        pop_.y1_.push_back(y1);
        pop_.y0_.push_back(y0);
        return *this;
    }

    PopulationBuilder& add_analysis_unit(const std::string& id, const std::string& stratum,
                                         const Vector& w, const Vector& x, const Vector& e,
                                         const Vector& c, int z, int t, double y) {
        add_common(id, stratum, w, x, e, c);
        pop_.z_obs_.push_back(z);
        pop_.t_obs_.push_back(t);
        pop_.y_obs_.push_back(y);
        return *this;
    }

    Population build() {
        validate();
        return std::move(pop_);
    }

private:
    void add_common(const std::string& id, const std::string& stratum, const Vector& w,
                    const Vector& x, const Vector& e, const Vector& c) {
        check_block(w, Block::W);
        check_block(x, Block::X);
        check_block(e, Block::E);
        check_block(c, Block::C);
        pop_.unit_ids_.push_back(id);
        auto it = stratum_index_.find(stratum);
        int k;
        if (it == stratum_index_.end()) {
            k = static_cast<int>(pop_.stratum_labels_.size());
            stratum_index_.emplace(stratum, k);
            pop_.stratum_labels_.push_back(stratum);
            pop_.strata_.emplace_back();
        } else {
            k = it->second;
        }
        pop_.stratum_of_.push_back(k);
        pop_.strata_[k].push_back(static_cast<int>(pop_.unit_ids_.size()) - 1);
        append(pop_.w_, w);
        append(pop_.x_, x);
        append(pop_.e_, e);
        append(pop_.c_, c);
    }

    void check_block(const Vector& v, Block b) const {
        if (static_cast<int>(v.size()) != pop_.schema_.dim(b))
            throw ValidationError(std::string("covariate block ") + block_prefix(b) +
                                  " has wrong dimension");
    }

    static void append(std::vector<double>& dst, const Vector& v) {
        dst.insert(dst.end(), v.begin(), v.end());
    }

    void validate() {
        const auto& s = pop_.schema_;
        const int n = pop_.size();
        if (n == 0) throw ValidationError("population is empty");
        for (int k = 0; k < pop_.num_strata(); ++k) {
            if (pop_.stratum_size(k) < 4)
                throw ValidationError("stratum too small: '" + pop_.stratum_label(k) +
                                      "' has " + std::to_string(pop_.stratum_size(k)) +
                                      " units, need at least 4");
        }
        for (int b = 0; b < 4; ++b) {
            Block block = static_cast<Block>(b);
            const int d = s.dim(block);
            if (d == 0) continue;
            bool complete = true;
            for (int i = 0; i < n && complete; ++i) {
                const double* row = pop_.covariate_row(i, block);
                bool any_nan = false, all_nan = true;
                for (int j = 0; j < d; ++j) {
                    if (std::isnan(row[j])) any_nan = true;
                    else all_nan = false;
                }
                if (!any_nan) continue;
                if (!all_nan)
                    throw ValidationError(std::string("block ") + block_prefix(block) +
                                          " partially missing for unit " + pop_.unit_id(i));
                complete = false;
            }
            pop_.block_complete_[b] = complete;
        }
        // W and E are known for the whole population by construction.
        if (s.j1 > 0 && !pop_.block_complete(Block::W))
            throw ValidationError("block w must be present for every unit");
        if (s.j3 > 0 && !pop_.block_complete(Block::E))
            throw ValidationError("block e must be present for every unit");

        if (s.mode == PopulationMode::oracle) {
            for (Block b : {Block::X, Block::C})
                if (s.dim(b) > 0 && !pop_.block_complete(b))
                    throw ValidationError(std::string("block ") + block_prefix(b) +
                                          " must be complete in oracle mode");
            for (int i = 0; i < n; ++i)
                if (std::isnan(pop_.y1_[i]) || std::isnan(pop_.y0_[i]))
                    throw ValidationError("oracle mode requires y1 and y0 for every unit; "
                                          "missing for unit " + pop_.unit_id(i));
        } else {
            for (int i = 0; i < n; ++i) {
                const int z = pop_.z_obs_[i];
                if (z != 0 && z != 1)
                    throw ValidationError("z must be 0 or 1 for unit " + pop_.unit_id(i));
                const int t = pop_.t_obs_[i];
                const bool has_y = !std::isnan(pop_.y_obs_[i]);
                if (z == 1) {
                    if (t != 0 && t != 1)
                        throw ValidationError("sampled unit " + pop_.unit_id(i) +
                                              " needs t in {0,1}");
                    if (!has_y)
                        throw ValidationError("sampled unit " + pop_.unit_id(i) +
                                              " is missing its observed outcome");
                } else if (has_y) {
                    throw ValidationError("unsampled unit " + pop_.unit_id(i) +
                                          " must not carry an observed outcome");
                }
                if (z == 1) {
                    for (Block b : {Block::X, Block::C})
                        if (s.dim(b) > 0 && std::isnan(pop_.covariate(i, b, 0)))
                            throw ValidationError(std::string("block ") + block_prefix(b) +
                                                  " missing for sampled unit " + pop_.unit_id(i));
                }
            }
        }

        check_nesting();
        flag_zero_variance();
    }

    // Declared-prefix nesting: W is the leading block of X (when both are
    // declared), and the analysis blocks extend the design blocks,
    // W prefix of E and X prefix of C.
    void check_nesting() {
        const auto& s = pop_.schema_;
        auto check_prefix = [&](Block small, Block big) {
            const int ds = s.dim(small), db = s.dim(big);
            if (ds == 0 || db == 0) return;
            if (ds > db)
                throw ValidationError(std::string("nesting violation: dim(") +
                                      block_prefix(small) + ") > dim(" + block_prefix(big) + ")");
            for (int i = 0; i < pop_.size(); ++i) {
                const double* a = pop_.covariate_row(i, small);
                const double* b = pop_.covariate_row(i, big);
                if (std::isnan(a[0]) || std::isnan(b[0])) continue;
                for (int j = 0; j < ds; ++j) {
                    if (a[j] != b[j])
                        throw ValidationError(std::string("nesting violation: ") +
                                              block_prefix(small) + "_" + std::to_string(j + 1) +
                                              " != " + block_prefix(big) + "_" +
                                              std::to_string(j + 1) + " for unit " +
                                              pop_.unit_id(i));
                }
            }
        };
        if (s.adjustment_declared()) {
            check_prefix(Block::W, Block::X);
            check_prefix(Block::W, Block::E);
            check_prefix(Block::X, Block::C);
        }
    }

    // Zero-variance columns load fine but are flagged; balance metrics
    // reject them later if they make the metric singular.
    void flag_zero_variance() {
        for (int b = 0; b < 4; ++b) {
            Block block = static_cast<Block>(b);
            const int d = pop_.schema_.dim(block);
            if (d == 0 || !pop_.block_complete(block)) continue;
            for (int j = 0; j < d; ++j) {
                bool constant_everywhere = true;
                for (int k = 0; k < pop_.num_strata() && constant_everywhere; ++k) {
                    const auto& units = pop_.stratum_units(k);
                    const double first = pop_.covariate(units[0], block, j);
                    for (int i : units)
                        if (pop_.covariate(i, block, j) != first) {
                            constant_everywhere = false;
                            break;
                        }
                }
                if (constant_everywhere)
                    pop_.zero_variance_.push_back({block, j});
            }
        }
    }

    Population pop_;
    std::map<std::string, int> stratum_index_;
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> bind_block_columns(const CsvTable& t, Block b, int dim,
                                           const std::string& path) {
    std::vector<int> cols(dim);
    for (int j = 0; j < dim; ++j) {
        const std::string name = std::string(block_prefix(b)) + "_" + std::to_string(j + 1);
        const int c = t.column(name);
        if (c < 0) throw ConfigError(path + ": missing column '" + name + "'");
        cols[j] = c;
    }
    return cols;
}

} // namespace detail

// Loads `unit_id, stratum, w_*, x_*, e_*, c_*` plus `y1, y0` (oracle) or
// `z, t, y` (analysis). Columns are bound by name; unexpected columns are
// rejected.
inline Population load_population(const std::string& path, const CovariateSchema& schema) {
    const CsvTable t = read_csv(path);

    const int col_id = t.column("unit_id");
    const int col_stratum = t.column("stratum");
    if (col_id < 0) throw ConfigError(path + ": missing column 'unit_id'");
    if (col_stratum < 0) throw ConfigError(path + ": missing column 'stratum'");

    std::vector<std::vector<int>> block_cols(4);
    for (int b = 0; b < 4; ++b)
        block_cols[b] =
            detail::bind_block_columns(t, static_cast<Block>(b), schema.dim(static_cast<Block>(b)), path);

    int col_y1 = -1, col_y0 = -1, col_z = -1, col_t = -1, col_y = -1;
    std::size_t expected = 2;
    for (int b = 0; b < 4; ++b) expected += block_cols[b].size();
    if (schema.mode == PopulationMode::oracle) {
        col_y1 = t.column("y1");
        col_y0 = t.column("y0");
        if (col_y1 < 0) throw ConfigError(path + ": missing column 'y1'");
        if (col_y0 < 0) throw ConfigError(path + ": missing column 'y0'");
        expected += 2;
    } else {
        col_z = t.column("z");
        col_t = t.column("t");
        col_y = t.column("y");
        if (col_z < 0) throw ConfigError(path + ": missing column 'z'");
        if (col_t < 0) throw ConfigError(path + ": missing column 't'");
        if (col_y < 0) throw ConfigError(path + ": missing column 'y'");
        expected += 3;
    }
    if (t.header.size() != expected)
        throw ConfigError(path + ": header does not match the declared schema (expected " +
                          std::to_string(expected) + " columns, found " +
                          std::to_string(t.header.size()) + ")");

    PopulationBuilder builder(schema);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string context = path + " row " + std::to_string(r + 2);
        Vector blocks[4];
        for (int b = 0; b < 4; ++b) {
            blocks[b].resize(block_cols[b].size());
            for (std::size_t j = 0; j < block_cols[b].size(); ++j)
                blocks[b][j] = parse_cell(row[block_cols[b][j]], context);
        }
        if (schema.mode == PopulationMode::oracle) {
            builder.add_oracle_unit(row[col_id], row[col_stratum], blocks[0], blocks[1],
                                    blocks[2], blocks[3], parse_cell(row[col_y1], context),
                                    parse_cell(row[col_y0], context));
        } else {
            const double zv = parse_cell(row[col_z], context);
            const double tv = parse_cell(row[col_t], context);
            builder.add_analysis_unit(row[col_id], row[col_stratum], blocks[0], blocks[1],
                                      blocks[2], blocks[3], std::isnan(zv) ? -1 : static_cast<int>(zv),
                                      std::isnan(tv) ? -1 : static_cast<int>(tv),
                                      parse_cell(row[col_y], context));
        }
    }
    return builder.build();
}

} // namespace srsrr
