#include "twb/simulator.hpp"

#include <algorithm>
#include <set>

#include "parallel.hpp"

namespace twb {

ShotRecord sample_shot(const TwbModel& m, RngState& rng) {
    validate(m);
    // fixed draw order is part of the determinism contract
    std::int64_t n_p = sample_mandel_rice(rng, m.paired);
    std::int64_t n_s = sample_mandel_rice(rng, m.noise_s);
    std::int64_t n_i = sample_mandel_rice(rng, m.noise_i);
    std::int64_t m_s = sample_binomial(rng, n_p + n_s, m.eta_s);
    std::int64_t m_i = sample_binomial(rng, n_p + n_i, m.eta_i);
    return ShotRecord{std::uint32_t(m_s), std::uint32_t(m_i)};
}

JointHistogram run_experiment(const TwbModel& m, std::int64_t shots, std::uint64_t seed) {
    validate(m);
    if (shots < 1) throw ConfigError("shots must be at least 1");

    struct Local {
        std::vector<std::vector<std::uint64_t>> tally;
        std::size_t max_cols = 0;
        void add(const ShotRecord& r) {
            if (r.m_s >= tally.size()) tally.resize(r.m_s + 1);
            auto& row = tally[r.m_s];
            if (r.m_i >= row.size()) row.resize(r.m_i + 1, 0);
            ++row[r.m_i];
            max_cols = std::max(max_cols, row.size());
        }
    };

    const std::int64_t grain = 16384;
    std::size_t chunks = std::size_t((shots + grain - 1) / grain);
    std::vector<Local> locals(chunks);
    detail::parallel_for(chunks, [&](std::size_t c) {
        std::int64_t lo = std::int64_t(c) * grain;
        std::int64_t hi = std::min(shots, lo + grain);
        Local& loc = locals[c];
        for (std::int64_t t = lo; t < hi; ++t) {
            RngState rng = substream(seed, std::uint64_t(t));
            loc.add(sample_shot(m, rng));
        }
    });

    std::size_t rows = 1, cols = 1;
    for (const Local& loc : locals) {
        rows = std::max(rows, loc.tally.size());
        cols = std::max(cols, loc.max_cols);
    }
    JointHistogram h;
    h.rows = rows;
    h.cols = cols;
    h.shots = double(shots);
    h.counts.assign(rows * cols, 0.0);
    for (const Local& loc : locals)
        for (std::size_t i = 0; i < loc.tally.size(); ++i)
            for (std::size_t j = 0; j < loc.tally[i].size(); ++j)
                h.at(i, j) += double(loc.tally[i][j]);
    return h;
}

std::vector<SweepResult> run_sweep(const SweepConfig& cfg) {
    if (cfg.shots < 1) throw ConfigError("shots must be at least 1");
    std::set<std::string> labels;
    for (const auto& pt : cfg.points)
        if (!labels.insert(pt.label).second)
            throw ConfigError("duplicate sweep label: " + pt.label);

    std::vector<SweepResult> out;
    out.reserve(cfg.points.size());
    for (std::size_t idx = 0; idx < cfg.points.size(); ++idx) {
        const auto& pt = cfg.points[idx];
        // decorrelate points while keeping the whole sweep reproducible
        std::uint64_t point_seed = cfg.seed + 0x9e3779b97f4a7c15ULL * (idx + 1);
        SweepResult r;
        r.label = pt.label;
        r.histogram = run_experiment(pt.model, cfg.shots, point_seed);
        CriteriaOptions copts = cfg.criteria;
        copts.bootstrap_seed = point_seed ^ 0x517cc1b727220a95ULL;
        r.report = evaluate_criteria(r.histogram, copts);
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace twb
