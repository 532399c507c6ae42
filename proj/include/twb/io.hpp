#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "twb/criteria.hpp"
#include "twb/intensity.hpp"
#include "twb/reconstruct.hpp"
#include "twb/types.hpp"

namespace twb {

inline constexpr const char* kSchema = "twb-v1";
inline constexpr const char* kToolVersion = "twb 1.0.0";

struct ProvenanceInput {
    std::string path;
    std::string fnv1a64; // hex digest of the file bytes
};

struct ReportDocument {
    CriteriaReport criteria;
    std::optional<ReconstructionResult> reconstruction;
    std::optional<NegativityReport> negativity;
    std::vector<ProvenanceInput> inputs;
    std::uint64_t seed = 0;
    std::string version = kToolVersion;
    std::string config_echo; // serialized invocation options
};

std::string fnv1a64_hex(const std::string& bytes);
std::string fnv1a64_file(const std::string& path);

// CSV with exact header "m_s,m_i". Parse failures carry the line number.
std::vector<ShotRecord> load_shots(const std::string& path);
void save_shots(const std::string& path, const std::vector<ShotRecord>& records);

JointHistogram histogram_from_shots(const std::vector<ShotRecord>& records);

void save_model(const std::string& path, const TwbModel& m);
TwbModel load_model(const std::string& path);

void save_histogram(const std::string& path, const JointHistogram& h);
JointHistogram load_histogram(const std::string& path);

// Reconstruction files keep the full model plus residual and derived block;
// load_model also accepts them (it reads the nested model).
void save_reconstruction(const std::string& path, const ReconstructionResult& r);
ReconstructionResult load_reconstruction(const std::string& path);

// Grid CSV (W_s,W_i,value) plus JSON sidecar at path + ".meta.json" holding
// order, axes, damping and flags. No timestamps anywhere: reruns must be
// byte identical.
void save_grid(const std::string& csv_path, const IntensityGrid& g);
IntensityGrid load_grid(const std::string& csv_path);

void save_report(const std::string& path, const ReportDocument& doc);

int cli_main(int argc, char** argv);

} // namespace twb
