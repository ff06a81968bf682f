// haloxsim: verification, litmus, timing sweep and trace front end.

#include "halox/bench.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace halox;

int main(int argc, char** argv)
{
    CLI::App app{"Halo-exchange protocol simulator"};
    app.require_subcommand(1);

    std::string configPath, outDir, schedule, memoryModel, mutate;
    std::vector<std::uint64_t> seeds;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", configPath, "JSON config file");
        sub->add_option("--seed", seeds, "Seed (repeatable, replaces config seeds)")->take_all();
        sub->add_option("--out", outDir, "Output directory");
        sub->add_option("--schedule", schedule, "serialized or fused")
            ->check(CLI::IsMember({"serialized", "fused", "both"}));
        sub->add_option("--memory-model", memoryModel, "sequential or weak")
            ->check(CLI::IsMember({"sequential", "weak"}));
        sub->add_option("--mutate", mutate, "Inject a protocol mutation");
    };
    auto* verify = app.add_subcommand("verify", "Run the exchange correctness suites");
    auto* litmus = app.add_subcommand("litmus", "Run memory-model litmus and mutation tests");
    auto* sweep = app.add_subcommand("sweep", "Write the timing sweep CSV");
    auto* trace = app.add_subcommand("trace", "Write timeline traces and exchange event logs");
    for (auto* s : {verify, litmus, sweep, trace})
        add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return bench::kConfigError;
    }

    try {
        nlohmann::json doc = {{"schema_version", bench::kSchemaVersion}};
        if (!configPath.empty()) {
            std::ifstream in(configPath);
            if (!in)
                throw bench::ConfigError("cannot open config '" + configPath + "'");
            try {
                doc = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw bench::ConfigError("config is not valid JSON: " + std::string(e.what()));
            }
            if (!doc.is_object())
                throw bench::ConfigError("config must be a JSON object");
        }
        if (!seeds.empty())
            doc["seeds"] = seeds;
        if (!outDir.empty())
            doc["out"] = outDir;
        if (!schedule.empty())
            doc["schedule"] = schedule;
        if (!memoryModel.empty())
            doc["memory_model"] = memoryModel;
        if (!mutate.empty())
            doc["mutation"] = mutate;
        const auto cfg = bench::parse_config(doc);

        if (verify->parsed())
            return bench::cmd_verify(cfg, std::cout);
        if (litmus->parsed())
            return bench::cmd_litmus(cfg, std::cout);
        if (sweep->parsed())
            return bench::cmd_sweep(cfg, std::cout);
        return bench::cmd_trace(cfg, std::cout);
    } catch (const bench::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bench::kConfigError;
    } catch (const dd::DecompositionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bench::kConfigError;
    } catch (const dd::AtomFileError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bench::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return bench::kInternalError;
    }
}
