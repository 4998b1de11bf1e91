#include "mslide/stream.hpp"

#include "mslide/binary_io.hpp"
#include "mslide/error.hpp"
#include "mslide/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mslide {

namespace {

struct CohortRow {
    const char* task;
    const char* cls;
    std::size_t slides;
};

// Slide counts per subtype of the six TCGA cohorts (B, R, N, E, T, C).
constexpr CohortRow kCohorts[] = {
    {"BRCA", "IDC", 726},  {"BRCA", "ILC", 149},   {"RCC", "CC", 498},   {"RCC", "P", 289},
    {"RCC", "ChRCC", 118}, {"NSCLC", "SCC", 845},  {"NSCLC", "A", 109},  {"ESCA", "SCC", 114},
    {"ESCA", "A", 86},     {"TGCT", "S", 66},      {"TGCT", "MGCT", 29}, {"CESC", "A", 270},
    {"CESC", "SCC", 49},
};

constexpr std::uint64_t kPromptSalt = 0x70726f6d70747321ull;
constexpr std::uint64_t kSiteSalt   = 0x7369746573686966ull;
constexpr std::uint64_t kBagSalt    = 0x6261677362616773ull;

} // namespace

constexpr std::size_t kCountScale = 3;

StreamConfig StreamConfig::default_six_task() {
    StreamConfig cfg;
    for (const auto& row : kCohorts) {
        if (cfg.tasks.empty() || cfg.tasks.back().name != row.task) {
            cfg.tasks.push_back({row.task, {}});
        }
        const auto total = static_cast<std::size_t>(std::lround(static_cast<double>(row.slides) / 10.0));
        const auto test  = std::max<std::size_t>(5, static_cast<std::size_t>(std::lround(static_cast<double>(total) / 5.0)));
        const auto train = total > test + 2 ? total - test : std::size_t{2};
        cfg.tasks.back().classes.push_back({row.cls, kCountScale * train, kCountScale * test});
    }
    return cfg;
}

void StreamConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, "stream config: " + msg); };
    if (tasks.empty()) {
        fail("at least one task is required");
    }
    for (const auto& t : tasks) {
        if (t.classes.size() < 2) {
            fail(fmt::format("task '{}' needs at least 2 classes", t.name));
        }
        for (const auto& c : t.classes) {
            if (c.n_train < 1 || c.n_test < 1) {
                fail(fmt::format("class '{}/{}' needs at least one train and one test bag", t.name, c.name));
            }
        }
    }
    if (dim < 1 || dim > 768) {
        fail(fmt::format("dim must be in [1, 768], got {}", dim));
    }
    if (patches_min < 1 || patches_max < patches_min) {
        fail(fmt::format("bad patch range [{}, {}]", patches_min, patches_max));
    }
    if (!(signal_fraction > 0.0 && signal_fraction <= 1.0)) {
        fail(fmt::format("signal_fraction must be in (0, 1], got {}", signal_fraction));
    }
    if (!(noise_std >= 0.0) || !(site_shift_std >= 0.0)) {
        fail("noise and shift standard deviations must be non-negative");
    }
    if (n_sites < 1) {
        fail("n_sites must be at least 1");
    }
}

Stream gen_stream(const StreamConfig& config) {
    config.validate();
    PromptGeometry geo;
    geo.dim     = config.dim;
    geo.rho_in  = config.rho_in;
    geo.rho_out = config.rho_out;
    for (const auto& t : config.tasks) {
        geo.classes_per_task.push_back(t.classes.size());
        geo.task_names.push_back(t.name);
        std::vector<std::string> names;
        for (const auto& c : t.classes) {
            names.push_back(c.name);
        }
        geo.class_names.push_back(std::move(names));
    }

    Stream s;
    s.bank = synth_prompt_bank(geo, config.stream_seed ^ kPromptSalt);

    const bool          sites = config.site_shift_std > 0.0;
    std::vector<Matrix> shifts;
    if (sites) {
        auto                             rng = make_rng({config.stream_seed, kSiteSalt});
        std::normal_distribution<double> normal(0.0, config.site_shift_std);
        for (std::size_t k = 0; k < config.n_sites; ++k) {
            Matrix shift(1, config.dim);
            for (double& x : shift.values()) {
                x = normal(rng);
            }
            shifts.push_back(std::move(shift));
        }
    }

    const std::size_t d = config.dim;
    for (std::size_t t = 0; t < config.tasks.size(); ++t) {
        auto                                       rng = make_rng({config.stream_seed, config.fold, t, kBagSalt});
        std::normal_distribution<double>           noise(0.0, config.noise_std);
        std::uniform_int_distribution<std::size_t> n_dist(config.patches_min, config.patches_max);
        std::uniform_int_distribution<std::size_t> site_dist(0, config.n_sites - 1);
        const Matrix&                              protos = s.bank.task(t).class_embeddings;

        auto make_bag = [&](std::size_t label) {
            const std::size_t n        = n_dist(rng);
            const auto        n_signal = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.signal_fraction * static_cast<double>(n))), 1, n);
            Bag               bag{Matrix(n, d), label, t, -1};
            for (std::size_t r = 0; r < n; ++r) {
                auto row = bag.patches.row(r);
                for (std::size_t j = 0; j < d; ++j) {
                    row[j] = (r < n_signal ? protos(label, j) : 0.0) + noise(rng);
                }
            }
            // interleave signal and background rows
            for (std::size_t r = n - 1; r > 0; --r) {
                std::uniform_int_distribution<std::size_t> pick(0, r);
                const std::size_t                          o = pick(rng);
                if (o != r) {
                    std::swap_ranges(bag.patches.row(r).begin(), bag.patches.row(r).end(), bag.patches.row(o).begin());
                }
            }
            if (sites) {
                bag.site_id       = static_cast<int>(site_dist(rng));
                const auto& shift = shifts[static_cast<std::size_t>(bag.site_id)];
                for (std::size_t r = 0; r < n; ++r) {
                    auto row = bag.patches.row(r);
                    for (std::size_t j = 0; j < d; ++j) {
                        row[j] += shift(0, j);
                    }
                }
            }
            return bag;
        };

        TaskData data;
        for (std::size_t c = 0; c < config.tasks[t].classes.size(); ++c) {
            const auto& spec = config.tasks[t].classes[c];
            for (std::size_t i = 0; i < spec.n_train; ++i) {
                data.train.push_back(make_bag(c));
            }
            for (std::size_t i = 0; i < spec.n_test; ++i) {
                data.test.push_back(make_bag(c));
            }
        }
        s.tasks.push_back(std::move(data));
        s.origin.push_back(t);
    }
    return s;
}

Stream permute_tasks(const Stream& stream, const std::vector<std::size_t>& order) {
    const std::size_t n = stream.tasks.size();
    std::vector<bool> seen(n, false);
    if (order.size() != n) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("permutation has {} entries for {} tasks", order.size(), n));
    }
    for (std::size_t i : order) {
        if (i >= n || seen[i]) {
            throw Error(ErrorCode::InvalidArgument, "invalid task permutation");
        }
        seen[i] = true;
    }
    Stream out;
    out.bank = stream.bank.reordered(order);
    for (std::size_t i : order) {
        out.tasks.push_back(stream.tasks[i]);
        out.origin.push_back(stream.origin[i]);
    }
    return out;
}

std::vector<std::vector<std::size_t>> alternating_orders() {
    // B=0 R=1 N=2 E=3 T=4 C=5
    return {
        {0, 5, 1, 4, 2, 3}, // B C R T N E
        {3, 2, 4, 1, 5, 0}, // E N T R C B
        {5, 0, 4, 1, 3, 2}, // C B T R E N
        {2, 3, 1, 4, 0, 5}, // N E R T B C
    };
}

std::vector<std::uint8_t> encode_bags(const TaskData& task, std::size_t origin, std::size_t dim) {
    binio::Writer w;
    w.bytes(kBagMagic, 4);
    w.u32(kBagVersion);
    w.u32(static_cast<std::uint32_t>(origin));
    w.u64(dim);
    w.u32(static_cast<std::uint32_t>(task.train.size()));
    w.u32(static_cast<std::uint32_t>(task.test.size()));
    for (const auto* split : {&task.train, &task.test}) {
        for (const Bag& b : *split) {
            if (b.patches.cols() != dim) {
                throw Error(ErrorCode::Shape, "encode_bags: bag width does not match dim");
            }
            w.u32(static_cast<std::uint32_t>(b.label));
            w.i32(b.site_id);
            w.u64(b.patches.rows());
            w.bytes(b.patches.values().data(), b.patches.size() * sizeof(double));
        }
    }
    return w.take();
}

TaskData decode_bags(const std::vector<std::uint8_t>& bytes, std::size_t* origin) {
    if (bytes.size() < 4) {
        throw Error(ErrorCode::Truncated, "truncated payload: bag file shorter than magic");
    }
    binio::Reader r(bytes);
    char          magic[4] = {};
    r.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kBagMagic)) {
        throw Error(ErrorCode::BadMagic, "bad magic: not an MSBG bag file");
    }
    const std::uint32_t version = r.u32();
    if (version != kBagVersion) {
        throw Error(ErrorCode::VersionMismatch, fmt::format("version mismatch: bag file {}, supported {}", version, kBagVersion));
    }
    const std::uint32_t task = r.u32();
    if (origin) {
        *origin = task;
    }
    const std::uint64_t dim     = r.u64();
    const std::uint32_t n_train = r.u32();
    const std::uint32_t n_test  = r.u32();
    if (dim == 0 || dim > 4096) {
        throw Error(ErrorCode::Truncated, fmt::format("corrupt bag dimension {}", dim));
    }
    TaskData out;
    for (std::uint32_t i = 0; i < n_train + n_test; ++i) {
        Bag b;
        b.label             = r.u32();
        b.site_id           = r.i32();
        b.task_id           = task;
        const std::uint64_t n = r.u64();
        if (n == 0 || n > (1ull << 32)) {
            throw Error(ErrorCode::Truncated, fmt::format("corrupt patch count {}", n));
        }
        r.require_remaining(n * dim * sizeof(double), "bag patches");
        std::vector<double> data(n * dim);
        r.bytes(data.data(), data.size() * sizeof(double));
        b.patches = Matrix(n, dim, std::move(data));
        (i < n_train ? out.train : out.test).push_back(std::move(b));
    }
    if (!r.at_end()) {
        throw Error(ErrorCode::Io, "trailing bytes after bag payload");
    }
    return out;
}

void save_stream(const Stream& stream, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
    }
    Checkpoint prompts = prompt_bank_to_checkpoint(stream.bank);
    std::string origin;
    for (std::size_t i = 0; i < stream.origin.size(); ++i) {
        origin += (i ? "," : "") + std::to_string(stream.origin[i]);
    }
    prompts.set_meta("stream.origin", origin);
    save(prompts, dir / "prompts.msld");
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        write_file(dir / fmt::format("task_{}.msbg", t), encode_bags(stream.tasks[t], stream.origin[t], stream.bank.dim()));
    }
}

Stream load_stream(const std::filesystem::path& dir) {
    const Checkpoint prompts = load(dir / "prompts.msld");
    Stream           s;
    s.bank = prompt_bank_from_checkpoint(prompts);
    for (std::size_t t = 0; t < s.bank.task_count(); ++t) {
        std::size_t origin = 0;
        s.tasks.push_back(decode_bags(read_file(dir / fmt::format("task_{}.msbg", t)), &origin));
        s.origin.push_back(origin);
        for (const auto* split : {&s.tasks.back().train, &s.tasks.back().test}) {
            for (const Bag& b : *split) {
                if (b.patches.cols() != s.bank.dim() || b.label >= s.bank.task(t).class_embeddings.rows()) {
                    throw Error(ErrorCode::Shape, fmt::format("task_{}.msbg does not match the prompt bank", t));
                }
            }
        }
    }
    return s;
}

} // namespace mslide
