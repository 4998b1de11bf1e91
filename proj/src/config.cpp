#include "mslide/config.hpp"

#include "mslide/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <fstream>
#include <set>
#include <sstream>

namespace mslide {

namespace {

namespace pt = boost::property_tree;

struct KeyDoc {
    const char* section;
    const char* key;
    const char* doc;
};

constexpr KeyDoc kKeys[] = {
    {"stream", "dim", "embedding dimension (default 64, max 768)"},
    {"stream", "patches_min", "fewest patches per bag (default 32)"},
    {"stream", "patches_max", "most patches per bag (default 96)"},
    {"stream", "signal_fraction", "share of patches drawn around the class prototype, (0,1] (default 0.25)"},
    {"stream", "noise_std", "per-coordinate patch noise (default 0.5)"},
    {"stream", "rho_in", "cosine between prompts of one task (default 0.3)"},
    {"stream", "rho_out", "cosine between prompts of different tasks (default 0.0)"},
    {"stream", "n_sites", "number of acquisition sites (default 1)"},
    {"stream", "site_shift_std", "per-site additive shift, 0 disables sites (default 0)"},
    {"stream", "seed", "stream seed (default 7)"},
    {"stream", "tasks", "comma list of task names; each needs a task.<name> key (default: six TCGA-shaped tasks)"},
    {"stream", "task.<name>", "comma list of class:n_train:n_test"},
    {"train", "epochs", "epochs per task (default 10)"},
    {"train", "lr", "AdamW learning rate (default 1e-3)"},
    {"train", "beta1", "default 0.9"},
    {"train", "beta2", "default 0.999"},
    {"train", "eps", "default 1e-8"},
    {"train", "weight_decay", "decoupled weight decay (default 1e-4)"},
    {"train", "k", "patches sampled per bag (default 64)"},
    {"train", "normalize", "cosine instead of dot-product logits, true/false (default false)"},
    {"train", "base_perturbation", "noise scale of the synthetic base weights (default 0.7)"},
    {"train", "base_seed", "seed of the synthetic base weights (default 11)"},
    {"merge", "scope", "global | per_param (default global)"},
    {"run", "methods", "comma list of merge_tcp, merge_naive, seq_finetune, zero_shot, avg_merge, per_task_oracle"},
    {"run", "folds", "number of folds (default 3)"},
    {"run", "seeds", "comma list of training seeds (default 1)"},
    {"run", "orders", "identity | reverse | alternating | explicit orders like 0-5-1-4-2-3;3-2-4-1-5-0"},
    {"run", "eval_k", "patches sampled per test bag (default 64)"},
    {"run", "mean_acc", "final_row | running_union (default final_row)"},
    {"run", "save_checkpoints", "write checkpoints/ per run, true/false (default true)"},
};

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::Config, "config: " + msg); }

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string              cur;
    std::istringstream       in(s);
    while (std::getline(in, cur, sep)) {
        const auto b = cur.find_first_not_of(" \t");
        const auto e = cur.find_last_not_of(" \t");
        if (b != std::string::npos) {
            out.push_back(cur.substr(b, e - b + 1));
        }
    }
    return out;
}

template<typename T>
T as(const std::string& section, const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T                  v{};
    in >> v;
    if (in.fail() || !in.eof()) {
        fail(fmt::format("[{}] {} = '{}' is not a valid value", section, key, value));
    }
    return v;
}

bool as_bool(const std::string& section, const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    fail(fmt::format("[{}] {} = '{}' is not a boolean", section, key, value));
}

std::vector<std::size_t> parse_order(const std::string& text) {
    std::vector<std::size_t> order;
    for (const auto& part : split(text, '-')) {
        order.push_back(as<std::size_t>("run", "orders", part));
    }
    return order;
}

} // namespace

RunConfig parse_run_config(const std::string& text) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        fail(e.what());
    }

    {
        std::istringstream lines(text);
        std::string        line;
        while (std::getline(lines, line)) {
            const auto b = line.find_first_not_of(" \t");
            if (b == std::string::npos || line[b] != '[') {
                continue;
            }
            const auto e       = line.find(']', b);
            const auto section = line.substr(b + 1, e == std::string::npos ? std::string::npos : e - b - 1);
            if (section != "stream" && section != "train" && section != "merge" && section != "run") {
                fail(fmt::format("unknown section [{}]", section));
            }
        }
    }

    RunConfig                cfg;
    std::vector<std::string> task_names;
    std::vector<std::pair<std::string, std::string>> task_specs;
    std::string              orders_text;

    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            fail(fmt::format("key '{}' outside any section", section));
        }
        if (section != "stream" && section != "train" && section != "merge" && section != "run") {
            fail(fmt::format("unknown section [{}]", section));
        }
        for (const auto& [key, node] : body) {
            const std::string& v = node.data();
            StreamConfig&      s = cfg.stream;
            TrainHyper&        t = cfg.hyper.train;
            if (section == "stream") {
                if (key == "dim") s.dim = as<std::size_t>(section, key, v);
                else if (key == "patches_min") s.patches_min = as<std::size_t>(section, key, v);
                else if (key == "patches_max") s.patches_max = as<std::size_t>(section, key, v);
                else if (key == "signal_fraction") s.signal_fraction = as<double>(section, key, v);
                else if (key == "noise_std") s.noise_std = as<double>(section, key, v);
                else if (key == "rho_in") s.rho_in = as<double>(section, key, v);
                else if (key == "rho_out") s.rho_out = as<double>(section, key, v);
                else if (key == "n_sites") s.n_sites = as<std::size_t>(section, key, v);
                else if (key == "site_shift_std") s.site_shift_std = as<double>(section, key, v);
                else if (key == "seed") s.stream_seed = as<std::uint64_t>(section, key, v);
                else if (key == "tasks") task_names = split(v, ',');
                else if (key.starts_with("task.")) task_specs.emplace_back(key.substr(5), v);
                else fail(fmt::format("unknown key '{}' in [stream]", key));
            } else if (section == "train") {
                if (key == "epochs") t.epochs = as<std::size_t>(section, key, v);
                else if (key == "lr") t.lr = as<double>(section, key, v);
                else if (key == "beta1") t.beta1 = as<double>(section, key, v);
                else if (key == "beta2") t.beta2 = as<double>(section, key, v);
                else if (key == "eps") t.eps = as<double>(section, key, v);
                else if (key == "weight_decay") t.weight_decay = as<double>(section, key, v);
                else if (key == "k") t.k = as<std::size_t>(section, key, v);
                else if (key == "normalize") t.normalize = as_bool(section, key, v);
                else if (key == "base_perturbation") cfg.hyper.base_perturbation = as<double>(section, key, v);
                else if (key == "base_seed") cfg.hyper.base_seed = as<std::uint64_t>(section, key, v);
                else fail(fmt::format("unknown key '{}' in [train]", key));
            } else if (section == "merge") {
                if (key == "scope") {
                    if (v == "global") cfg.hyper.scope = LambdaScope::Global;
                    else if (v == "per_param") cfg.hyper.scope = LambdaScope::PerParameter;
                    else fail(fmt::format("[merge] scope must be global or per_param, got '{}'", v));
                } else {
                    fail(fmt::format("unknown key '{}' in [merge]", key));
                }
            } else {
                if (key == "methods") {
                    cfg.methods.clear();
                    for (const auto& name : split(v, ',')) {
                        auto m = parse_method(name);
                        if (!m) {
                            fail(fmt::format("unknown method '{}'", name));
                        }
                        cfg.methods.push_back(*m);
                    }
                } else if (key == "folds") cfg.folds = as<std::size_t>(section, key, v);
                else if (key == "seeds") {
                    cfg.seeds.clear();
                    for (const auto& s_ : split(v, ',')) {
                        cfg.seeds.push_back(as<std::uint64_t>(section, key, s_));
                    }
                } else if (key == "orders") orders_text = v;
                else if (key == "eval_k") cfg.hyper.eval_k = as<std::size_t>(section, key, v);
                else if (key == "mean_acc") {
                    if (v == "final_row") cfg.hyper.mean_mode = MeanAccMode::FinalRow;
                    else if (v == "running_union") cfg.hyper.mean_mode = MeanAccMode::RunningUnion;
                    else fail(fmt::format("[run] mean_acc must be final_row or running_union, got '{}'", v));
                } else if (key == "save_checkpoints") cfg.save_checkpoints = as_bool(section, key, v);
                else fail(fmt::format("unknown key '{}' in [run]", key));
            }
        }
    }

    if (!task_names.empty() || !task_specs.empty()) {
        std::set<std::string> named(task_names.begin(), task_names.end());
        for (const auto& [name, spec] : task_specs) {
            if (!named.contains(name)) {
                fail(fmt::format("task.{} is not listed in [stream] tasks", name));
            }
        }
        cfg.stream.tasks.clear();
        for (const auto& name : task_names) {
            TaskSpec task{name, {}};
            bool     found = false;
            for (const auto& [tname, spec] : task_specs) {
                if (tname != name) {
                    continue;
                }
                found = true;
                for (const auto& cls : split(spec, ',')) {
                    const auto parts = split(cls, ':');
                    if (parts.size() != 3) {
                        fail(fmt::format("task.{}: class spec '{}' must be name:n_train:n_test", name, cls));
                    }
                    task.classes.push_back({parts[0], as<std::size_t>("stream", "task." + name, parts[1]),
                                            as<std::size_t>("stream", "task." + name, parts[2])});
                }
            }
            if (!found) {
                fail(fmt::format("task '{}' has no task.{} entry", name, name));
            }
            cfg.stream.tasks.push_back(std::move(task));
        }
    }
    cfg.stream.validate();

    const std::size_t n_tasks = cfg.stream.tasks.size();
    if (!orders_text.empty()) {
        cfg.orders.clear();
        if (orders_text == "identity") {
            cfg.orders.push_back({"identity", {}});
        } else if (orders_text == "reverse") {
            std::vector<std::size_t> rev;
            for (std::size_t i = n_tasks; i-- > 0;) {
                rev.push_back(i);
            }
            cfg.orders.push_back({"reverse", rev});
        } else if (orders_text == "alternating") {
            if (n_tasks != 6) {
                fail("orders = alternating requires the six-task stream");
            }
            const auto alts = alternating_orders();
            for (std::size_t i = 0; i < alts.size(); ++i) {
                cfg.orders.push_back({fmt::format("alt{}", i), alts[i]});
            }
        } else {
            const auto parts = split(orders_text, ';');
            for (std::size_t i = 0; i < parts.size(); ++i) {
                cfg.orders.push_back({fmt::format("order{}", i), parse_order(parts[i])});
            }
        }
        for (const auto& o : cfg.orders) {
            if (o.order.empty()) {
                continue;
            }
            std::vector<bool> seen(n_tasks, false);
            if (o.order.size() != n_tasks) {
                fail(fmt::format("order '{}' has {} entries for {} tasks", o.label, o.order.size(), n_tasks));
            }
            for (std::size_t i : o.order) {
                if (i >= n_tasks || seen[i]) {
                    fail(fmt::format("order '{}' is not a permutation", o.label));
                }
                seen[i] = true;
            }
        }
    }
    if (cfg.methods.empty()) {
        fail("[run] methods is empty");
    }
    if (cfg.folds == 0) {
        fail("[run] folds must be at least 1");
    }
    if (cfg.seeds.empty()) {
        fail("[run] seeds is empty");
    }
    if (cfg.hyper.train.k == 0 || cfg.hyper.eval_k == 0) {
        fail("patch sample sizes must be at least 1");
    }
    if (!(cfg.hyper.train.lr > 0.0)) {
        fail("[train] lr must be positive");
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Config, fmt::format("config: cannot read '{}'", path.string()));
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string config_reference() {
    std::string out = "Config file keys (INI sections [stream] [train] [merge] [run]):\n";
    for (const auto& k : kKeys) {
        out += fmt::format("  [{}] {:<18} {}\n", k.section, k.key, k.doc);
    }
    return out;
}

} // namespace mslide
