#include "winodds/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace winodds {

namespace {

std::string where(const SubjectRecord& r, std::size_t row) {
    return "record " + std::to_string(row + 1) + " (id '" + r.id + "')";
}

void check_record(const SubjectRecord& r, std::size_t row, std::size_t p) {
    if (r.arm != 0 && r.arm != 1)
        throw DataError(where(r, row) + ": arm must be 0 or 1, got " + std::to_string(r.arm));
    if (r.d1 != 0 && r.d1 != 1)
        throw DataError(where(r, row) + ": d1 must be 0 or 1, got " + std::to_string(r.d1));
    if (r.d2 != 0 && r.d2 != 1)
        throw DataError(where(r, row) + ": d2 must be 0 or 1, got " + std::to_string(r.d2));
    if (!std::isfinite(r.u1) || !std::isfinite(r.u2))
        throw DataError(where(r, row) + ": non-finite time");
    if (r.u1 < 0.0 || r.u2 < 0.0)
        throw DataError(where(r, row) + ": negative time");
    if (r.u2 > r.u1)
        throw DataError(where(r, row) + ": u2 exceeds u1");
    if (r.d2 == 1 && !(r.u2 < r.u1))
        throw DataError(where(r, row) + ": nonfatal event must occur strictly before u1");
    if (r.covariates.size() != p)
        throw DataError(where(r, row) + ": expected " + std::to_string(p) + " covariates, got " +
                        std::to_string(r.covariates.size()));
    for (std::size_t k = 0; k < p; ++k)
        if (!std::isfinite(r.covariates[k]))
            throw DataError(where(r, row) + ": missing or non-finite covariate " + std::to_string(k + 1));
}

void check_arm_sizes(std::size_t n0, std::size_t n1) {
    if (n1 == 0) throw DataError("treated arm empty");
    if (n0 == 0) throw DataError("control arm empty");
    if (n1 < 2) throw DataError("treated arm has fewer than 2 subjects");
    if (n0 < 2) throw DataError("control arm has fewer than 2 subjects");
}

}  // namespace

Dataset validate_dataset(std::vector<SubjectRecord> records, std::vector<std::string> covariate_names) {
    const std::size_t p = records.empty() ? covariate_names.size() : records.front().covariates.size();
    if (covariate_names.empty()) {
        for (std::size_t k = 0; k < p; ++k) covariate_names.push_back("x" + std::to_string(k + 1));
    } else if (covariate_names.size() != p) {
        throw DataError("covariate name count " + std::to_string(covariate_names.size()) +
                        " does not match covariate dimension " + std::to_string(p));
    }
    {
        std::unordered_set<std::string> seen;
        for (const auto& name : covariate_names)
            if (!seen.insert(name).second) throw DataError("duplicate covariate name '" + name + "'");
    }

    std::unordered_set<std::string> ids;
    ids.reserve(records.size());
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t row = 0; row < records.size(); ++row) {
        const auto& r = records[row];
        check_record(r, row, p);
        if (!ids.insert(r.id).second) throw DataError("duplicate id '" + r.id + "'");
        (r.arm == 1 ? n1 : n0) += 1;
    }
    check_arm_sizes(n0, n1);

    Dataset ds;
    ds.records_ = std::move(records);
    ds.names_ = std::move(covariate_names);
    ds.n0_ = n0;
    ds.n1_ = n1;
    return ds;
}

Dataset Dataset::select_covariates(std::span<const std::size_t> columns) const {
    std::vector<std::string> names;
    for (std::size_t c : columns) {
        if (c >= names_.size()) throw DataError("covariate index " + std::to_string(c) + " out of range");
        names.push_back(names_[c]);
    }
    Dataset out = *this;
    out.names_ = std::move(names);
    for (auto& r : out.records_) {
        std::vector<double> x;
        x.reserve(columns.size());
        for (std::size_t c : columns) x.push_back(r.covariates[c]);
        r.covariates = std::move(x);
    }
    return out;
}

Dataset Dataset::select_covariates(std::span<const std::string> names) const {
    std::vector<std::size_t> columns;
    for (const auto& name : names) {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) throw DataError("unknown covariate '" + name + "'");
        columns.push_back(static_cast<std::size_t>(it - names_.begin()));
    }
    return select_covariates(columns);
}

Dataset Dataset::covariate_prefix(std::size_t k) const {
    if (k > p()) throw DataError("requested " + std::to_string(k) + " covariates but only " +
                                 std::to_string(p()) + " available");
    std::vector<std::size_t> columns(k);
    for (std::size_t c = 0; c < k; ++c) columns[c] = c;
    return select_covariates(columns);
}

Dataset Dataset::with_flipped_arms() const {
    Dataset out = *this;
    for (auto& r : out.records_) r.arm = 1 - r.arm;
    std::swap(out.n0_, out.n1_);
    return out;
}

Dataset Dataset::resample(std::span<const std::size_t> rows) const {
    Dataset out;
    out.names_ = names_;
    out.records_.reserve(rows.size());
    std::unordered_map<std::size_t, std::size_t> copies;
    for (std::size_t row : rows) {
        if (row >= records_.size()) throw DataError("resample row out of range");
        SubjectRecord r = records_[row];
        const std::size_t k = copies[row]++;
        if (k > 0) r.id += "#" + std::to_string(k);
        (r.arm == 1 ? out.n1_ : out.n0_) += 1;
        out.records_.push_back(std::move(r));
    }
    check_arm_sizes(out.n0_, out.n1_);
    return out;
}

EventSummary summarize_events(const Dataset& ds) {
    EventSummary s;
    s.n = ds.size();
    s.n0 = ds.n0();
    s.n1 = ds.n1();
    for (const auto& r : ds.records()) {
        const bool treated = r.arm == 1;
        (treated ? s.fatal1 : s.fatal0) += static_cast<std::size_t>(r.d1);
        (treated ? s.nonfatal1 : s.nonfatal0) += static_cast<std::size_t>(r.d2);
        (treated ? s.composite1 : s.composite0) += static_cast<std::size_t>(r.d1 == 1 || r.d2 == 1);
    }
    return s;
}

}  // namespace winodds
