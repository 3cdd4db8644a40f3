// Command-line front end.
//
// JSON reports go to stdout, human-readable diagnostics to stderr.
// Exit codes: 0 ok, 1 parse, 2 validation, 3 precondition, 4 disagreement.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ifsm/ifsm.hpp"

namespace {

enum ExitCode : int {
    kOk = 0,
    kParse = 1,
    kValidation = 2,
    kPrecondition = 3,
    kDisagree = 4,
};

struct Failure {
    int code;
    std::string kind;
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Failure{kParse, "ParseError", "cannot read " + path};
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void emit(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

ifsm::IfsModel load(const std::string& path) {
    try {
        return ifsm::parse_ifs(read_file(path));
    } catch (const ifsm::ParseError& e) {
        throw Failure{kParse, "ParseError", path + ": " + e.what()};
    }
}

/// Loads and validates; a failing model is reported on stdout and exits 2.
ifsm::IfsModel load_valid(const std::string& path) {
    ifsm::IfsModel m = load(path);
    const ifsm::ValidationReport report = ifsm::validate(m);
    if (!report.passed) {
        std::string msg = path + ": model failed validation";
        for (const auto& p : report.problems) msg += "\n  " + p;
        throw Failure{kValidation, "ValidationError", msg};
    }
    return m;
}

int cmd_validate(const std::string& path) {
    const ifsm::IfsModel m = load(path);
    const ifsm::ValidationReport report = ifsm::validate(m);
    emit(ifsm::to_json(report));
    if (!report.passed) {
        for (const auto& p : report.problems) std::cerr << path << ": " << p << '\n';
        return kValidation;
    }
    return kOk;
}

int cmd_moments(const std::string& path, const std::string& which, double tol, long max_iter) {
    const ifsm::IfsModel m = load_valid(path);
    ifsm::MomentReport r;
    if (which == "iterate") {
        r = ifsm::covariance_by_iteration(m, tol, max_iter);
    } else {
        const auto choice = which == "general" ? ifsm::PathChoice::General
                            : which == "fast"  ? ifsm::PathChoice::Fast
                                               : ifsm::PathChoice::Auto;
        r = ifsm::covariance(m, choice);
    }
    emit(ifsm::to_json(r));
    return kOk;
}

int cmd_sample(const std::string& path, std::size_t n, std::size_t burn_in, std::uint64_t seed, std::size_t shards) {
    const ifsm::IfsModel m = load_valid(path);
    emit(ifsm::to_json(ifsm::sample_sharded(m, n, burn_in, seed, shards)));
    return kOk;
}

int cmd_compare(const std::string& path, const ifsm::CompareOptions& opts, const std::string& reference) {
    const ifsm::IfsModel m = load_valid(path);
    std::optional<ifsm::MomentReport> cached;
    if (!reference.empty()) {
        try {
            cached = ifsm::moment_report_from_json(nlohmann::json::parse(read_file(reference)));
        } catch (const nlohmann::json::exception& e) {
            throw Failure{kParse, "ParseError", reference + ": " + e.what()};
        } catch (const ifsm::ParseError& e) {
            throw Failure{kParse, "ParseError", reference + ": " + e.what()};
        }
    }
    const ifsm::ComparisonReport r = ifsm::compare(m, opts, cached);
    emit(ifsm::to_json(r));
    if (r.verdict == ifsm::Verdict::Disagree) {
        std::cerr << path << ": exact, iterated and empirical moments disagree (max |exact - iterated| = "
                  << r.max_abs_diff_exact_vs_iterated << ")\n";
        return kDisagree;
    }
    return kOk;
}

int cmd_render(const std::string& path, std::size_t n, std::size_t burn_in, std::uint64_t seed, std::size_t width,
               std::size_t height, const std::string& out) {
    const ifsm::IfsModel m = load_valid(path);
    const ifsm::RasterImage img = ifsm::raster(m, n, burn_in, seed, width, height);
    ifsm::write_pgm(img, out);
    emit({{"out", out},
          {"width", img.width},
          {"height", img.height},
          {"bbox", {img.bbox.min_x, img.bbox.min_y, img.bbox.max_x, img.bbox.max_y}},
          {"in_bbox", img.total()},
          {"dropped", img.dropped},
          {"seed", seed}});
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact and sampled moments of self-affine measures"};
    app.require_subcommand(1);

    std::string path;
    std::string which = "auto";
    double tol = ifsm::kIterationDefaultTol;
    long max_iter = ifsm::kIterationDefaultMaxIter;
    std::size_t n = 1'000'000;
    std::size_t burn_in = ifsm::kDefaultBurnIn;
    std::uint64_t seed = 42;
    std::size_t shards = 1;
    std::size_t width = 512;
    std::size_t height = 512;
    std::string out = "attractor.pgm";
    std::string reference;
    ifsm::CompareOptions copts;

    auto* validate = app.add_subcommand("validate", "Check contraction and weight hypotheses");
    validate->add_option("file", path, "IFS JSON document")->required();

    auto* moments = app.add_subcommand("moments", "Exact mean, second moment and covariance");
    moments->add_option("file", path, "IFS JSON document")->required();
    moments->add_option("--path", which, "Solver path")
        ->check(CLI::IsMember({"auto", "general", "fast", "iterate"}))
        ->capture_default_str();
    moments->add_option("--tol", tol, "Iteration tolerance (--path=iterate)")->capture_default_str();
    moments->add_option("--max-iter", max_iter, "Iteration cap (--path=iterate)")->capture_default_str();

    auto* sample = app.add_subcommand("sample", "Chaos-game empirical moments");
    sample->add_option("file", path, "IFS JSON document")->required();
    sample->add_option("--n", n, "Number of retained points")->capture_default_str();
    sample->add_option("--burn-in", burn_in, "Discarded leading points")->capture_default_str();
    sample->add_option("--seed", seed, "Generator seed")->capture_default_str();
    sample->add_option("--shards", shards, "Independent streams")->check(CLI::PositiveNumber)->capture_default_str();

    auto* compare = app.add_subcommand("compare", "Cross-check exact, iterated and sampled moments");
    compare->add_option("file", path, "IFS JSON document")->required();
    compare->add_option("--n", copts.n, "Number of sampled points")->capture_default_str();
    compare->add_option("--burn-in", copts.burn_in, "Discarded leading points")->capture_default_str();
    compare->add_option("--seed", copts.seed, "Generator seed")->capture_default_str();
    compare->add_option("--shards", copts.shards, "Independent streams")->check(CLI::PositiveNumber)->capture_default_str();
    compare->add_option("--tol", copts.tol, "Max |exact - iterated|")->capture_default_str();
    compare->add_option("--sigma", copts.sigma, "Max |z| of the empirical mean")->capture_default_str();
    compare->add_option("--reference", reference, "Stored `moments` report used in place of the exact solve");

    auto* render = app.add_subcommand("render", "Rasterize the attractor to a binary PGM");
    render->add_option("file", path, "IFS JSON document (d = 2)")->required();
    render->add_option("--n", n, "Number of plotted points")->capture_default_str();
    render->add_option("--burn-in", burn_in, "Discarded leading points")->capture_default_str();
    render->add_option("--seed", seed, "Generator seed")->capture_default_str();
    render->add_option("--width", width, "Image width")->check(CLI::PositiveNumber)->capture_default_str();
    render->add_option("--height", height, "Image height")->check(CLI::PositiveNumber)->capture_default_str();
    render->add_option("--out", out, "Output PGM path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        return kParse;
    }

    try {
        if (*validate) return cmd_validate(path);
        if (*moments) return cmd_moments(path, which, tol, max_iter);
        if (*sample) return cmd_sample(path, n, burn_in, seed, shards);
        if (*compare) return cmd_compare(path, copts, reference);
        if (*render) return cmd_render(path, n, burn_in, seed, width, height, out);
    } catch (const Failure& f) {
        std::cerr << f.message << '\n';
        emit({{"error", {{"kind", f.kind}, {"message", f.message}, {"exit_code", f.code}}}});
        return f.code;
    } catch (const ifsm::PreconditionFailed& e) {
        std::cerr << e.what() << '\n';
        emit({{"error", {{"kind", "PreconditionFailed"}, {"message", e.what()}, {"exit_code", kPrecondition}}}});
        return kPrecondition;
    } catch (const ifsm::NoConvergence& e) {
        std::cerr << e.what() << '\n';
        emit({{"error", {{"kind", "NoConvergence"}, {"message", e.what()}, {"exit_code", kPrecondition}}},
              {"partial", ifsm::to_json(e.partial())}});
        return kPrecondition;
    } catch (const ifsm::SingularSystem& e) {
        std::cerr << e.what() << '\n';
        emit({{"error", {{"kind", "SingularSystem"}, {"message", e.what()}, {"exit_code", kPrecondition}}}});
        return kPrecondition;
    } catch (const ifsm::DimensionUnsupported& e) {
        std::cerr << e.what() << '\n';
        emit({{"error", {{"kind", "DimensionUnsupported"}, {"message", e.what()}, {"exit_code", kPrecondition}}}});
        return kPrecondition;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << '\n';
        emit({{"error", {{"kind", "InvalidArgument"}, {"message", e.what()}, {"exit_code", kPrecondition}}}});
        return kPrecondition;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        emit({{"error", {{"kind", "Error"}, {"message", e.what()}, {"exit_code", kParse}}}});
        return kParse;
    }
    return kOk;
}
