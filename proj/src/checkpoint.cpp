#include "infwide/checkpoint.hpp"

#include "infwide/raw_tensor.hpp"

#include <fstream>
#include <sstream>

namespace infwide {

namespace fs = std::filesystem;

namespace {

std::string hex(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

} // namespace

void save_checkpoint(const fs::path& dir, const NetworkConfig& cfg, const ParamStore<float>& store,
                     const Adam<float>* adam, long step, const nlohmann::json& extra)
{
    fs::create_directories(dir / "params");
    std::vector<std::string> names;
    for (const auto& [name, p] : store.named()) {
        save_tensor(dir / "params" / (name + ".rt"), p.value());
        names.push_back(name);
    }
    nlohmann::json manifest{{"schema", 1},
                            {"config", cfg},
                            {"config_hash", hex(cfg.hash())},
                            {"step", step},
                            {"parameters", names},
                            {"parameter_count", store.count()},
                            {"extra", extra}};
    if (adam && adam->steps() > 0) {
        fs::create_directories(dir / "adam");
        const auto& m = adam->moments();
        if (m.size() != names.size()) throw ContractError("optimizer state does not match the parameter list");
        for (std::size_t i = 0; i < names.size(); ++i) {
            save_tensor(dir / "adam" / (names[i] + ".m.rt"), m[i].m);
            save_tensor(dir / "adam" / (names[i] + ".v.rt"), m[i].v);
        }
        manifest["optimizer"] = {{"kind", "adam"},
                                 {"t", adam->steps()},
                                 {"beta1", adam->config().beta1},
                                 {"beta2", adam->config().beta2},
                                 {"eps", adam->config().eps}};
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir)
{
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no checkpoint manifest in " + dir.string());
    nlohmann::json manifest;
    Checkpoint ck;
    std::vector<std::string> names;
    try {
        in >> manifest;
        ck.config = manifest.at("config").get<NetworkConfig>();
        ck.step = manifest.at("step").get<long>();
        names = manifest.at("parameters").get<std::vector<std::string>>();
        ck.extra = manifest.value("extra", nlohmann::json::object());
        if (manifest.at("config_hash").get<std::string>() != hex(ck.config.hash()))
            throw IoError(dir.string() + ": config hash mismatch");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(dir.string() + "/manifest.json: " + e.what());
    }
    for (const auto& name : names) ck.store.set(name, load_tensor<float>(dir / "params" / (name + ".rt")));
    ck.store.freeze();
    if (manifest.contains("optimizer")) {
        ck.adam_steps = manifest["optimizer"].at("t").get<long>();
        for (const auto& name : names)
            ck.moments.push_back({load_tensor<float>(dir / "adam" / (name + ".m.rt")),
                                  load_tensor<float>(dir / "adam" / (name + ".v.rt"))});
    }
    return ck;
}

} // namespace infwide
