#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace winodds {

/// Raised for any violation of the dataset invariants (bad arm codes,
/// inconsistent times, duplicate ids, missing covariates, tiny arms).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One trial participant in the observed two-level form
/// (u1, d1) for the fatal level and (u2, d2) for the first nonfatal event.
struct SubjectRecord {
    std::string id;
    int arm = 0;
    std::vector<double> covariates;
    double u1 = 0.0;
    int d1 = 0;
    double u2 = 0.0;
    int d2 = 0;

    bool operator==(const SubjectRecord&) const = default;
};

/// Validated, immutable two-arm trial dataset.
///
/// Only `validate_dataset` produces instances from raw records; the
/// derived constructors (`select_covariates`, `resample`, ...) preserve
/// the invariants by construction.
class Dataset {
public:
    Dataset() = default;

    const std::vector<SubjectRecord>& records() const noexcept { return records_; }
    const SubjectRecord& operator[](std::size_t i) const noexcept { return records_[i]; }
    std::size_t size() const noexcept { return records_.size(); }
    std::size_t p() const noexcept { return names_.size(); }
    std::size_t n0() const noexcept { return n0_; }
    std::size_t n1() const noexcept { return n1_; }
    const std::vector<std::string>& covariate_names() const noexcept { return names_; }

    /// Keeps only the listed covariate columns, in the given order.
    Dataset select_covariates(std::span<const std::size_t> columns) const;
    /// Keeps covariates by name; throws DataError on unknown names.
    Dataset select_covariates(std::span<const std::string> names) const;
    /// Keeps the first k covariates.
    Dataset covariate_prefix(std::size_t k) const;
    /// Arm relabelling A -> 1 - A.
    Dataset with_flipped_arms() const;
    /// Row selection with repetition allowed. Repeated rows receive a
    /// "#k" id suffix so ids stay unique. Throws if an arm ends up with
    /// fewer than two subjects.
    Dataset resample(std::span<const std::size_t> rows) const;

    bool operator==(const Dataset&) const = default;

private:
    friend Dataset validate_dataset(std::vector<SubjectRecord>, std::vector<std::string>);

    std::vector<SubjectRecord> records_;
    std::vector<std::string> names_;
    std::size_t n0_ = 0;
    std::size_t n1_ = 0;
};

/// Checks every record and the arm sizes and returns the dataset.
/// `covariate_names` may be empty, in which case names x1..xp are used.
Dataset validate_dataset(std::vector<SubjectRecord> records,
                         std::vector<std::string> covariate_names = {});

/// Per-level event counts by arm (the descriptive summary of a trial).
struct EventSummary {
    std::size_t n = 0, n0 = 0, n1 = 0;
    std::size_t fatal0 = 0, fatal1 = 0;
    std::size_t nonfatal0 = 0, nonfatal1 = 0;
    std::size_t composite0 = 0, composite1 = 0;

    bool operator==(const EventSummary&) const = default;
};

EventSummary summarize_events(const Dataset& ds);

}  // namespace winodds
