// End-to-end tests for the flownet binary. Each case shells out to the real
// executable (path injected via FLOWNET_CLI_PATH), captures stdout/stderr and
// the exit code, and checks the emitted files with the library's own loaders.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "flownet/flownet.hpp"
#include "reference.hpp"

namespace fs = std::filesystem;
using namespace flownet;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Scratch directory shared by all cases in this process.
const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() /
                     ("flownet_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path_of(const std::string& name) { return (work_dir() / name).string(); }

// `extra_env` is prepended verbatim (e.g. "FLOWNET_SEED=7"); by default the
// variable is scrubbed so the ambient environment cannot skew seed tests.
RunResult run_cli(const std::string& args, const std::string& extra_env = "") {
    static int counter = 0;
    const std::string out_file = path_of("stdout_" + std::to_string(counter) + ".txt");
    const std::string err_file = path_of("stderr_" + std::to_string(counter) + ".txt");
    ++counter;
    std::string cmd = extra_env.empty() ? "env -u FLOWNET_SEED " : "env " + extra_env + " ";
    cmd += "\"" FLOWNET_CLI_PATH "\" " + args + " > \"" + out_file + "\" 2> \"" + err_file + "\"";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string write_vector(const std::string& name, const Vector& v) {
    const std::string p = path_of(name);
    save_json_file(detail::vector_to_json(v), p);
    return p;
}

std::string write_inputs(const std::string& name, const std::vector<Vector>& xs) {
    nlohmann::json j = nlohmann::json::array();
    for (const Vector& x : xs) j.push_back(detail::vector_to_json(x));
    const std::string p = path_of(name);
    save_json_file(j, p);
    return p;
}

Network small_plain_tanh() {
    Matrix W(2, 2);
    W << 0.6, -0.2, 0.3, 0.5;
    Vector b(2);
    b << 0.2, -0.1;
    return make_network(2, {PlainLayer{W, b, ActivationKind::tanh()}});
}

Network small_res2(std::uint64_t seed, Index d, int depth) {
    std::mt19937_64 gen(seed);
    std::vector<Layer> layers;
    for (int k = 0; k < depth; ++k) {
        const double s = 0.4 / std::sqrt(static_cast<double>(d));
        ResBlock2 blk{s * ref::random_matrix(gen, d, d), 0.2 * ref::random_vector(gen, d),
                      s * ref::random_matrix(gen, d, d), 0.1 * ref::random_vector(gen, d),
                      ActivationKind::tanh()};
        layers.push_back(blk);
    }
    return make_network(d, std::move(layers));
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line + ",") {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return fields;
}

}  // namespace

TEST_CASE("help exits zero and lists the subcommands") {
    const RunResult r = run_cli("--help");
    CHECK(r.code == 0);
    for (const char* name :
         {"decompose", "flow-eval", "solve-tvp", "rediscretize", "compare", "converge"})
        CHECK(r.out.find(name) != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
    SECTION("no subcommand") {
        const RunResult r = run_cli("");
        CHECK(r.code == 2);
        CHECK(r.err.find("cli.usage") != std::string::npos);
    }
    SECTION("unknown subcommand") {
        const RunResult r = run_cli("frobnicate");
        CHECK(r.code == 2);
        CHECK(r.err.find("cli.usage") != std::string::npos);
    }
    SECTION("unknown flag") {
        const RunResult r = run_cli("decompose net.json --frob 3");
        CHECK(r.code == 2);
        CHECK(r.err.find("cli.usage") != std::string::npos);
    }
    SECTION("missing required option") {
        const std::string net = path_of("usage_net.json");
        save_network(small_plain_tanh(), net);
        const RunResult r = run_cli("flow-eval \"" + net + "\"");
        CHECK(r.code == 2);
        CHECK(r.err.find("cli.usage") != std::string::npos);
    }
}

TEST_CASE("file problems surface as categorized errors with exit code 1") {
    SECTION("missing network file") {
        const RunResult r = run_cli("decompose \"" + path_of("nope.json") + "\"");
        CHECK(r.code == 1);
        CHECK(r.err.find("io.not_found") != std::string::npos);
        CHECK(r.err.find("nope.json") != std::string::npos);
    }
    SECTION("malformed JSON") {
        const std::string bad = path_of("broken.json");
        write_text(bad, "{ this is not json");
        const RunResult r = run_cli("decompose \"" + bad + "\"");
        CHECK(r.code == 1);
        CHECK(r.err.find("parse.json") != std::string::npos);
    }
}

TEST_CASE("decompose reports layer ranks and writes the factor file") {
    const std::string net = path_of("dec_net.json");
    save_network(small_plain_tanh(), net);
    const std::string out = path_of("dec_out.json");
    const RunResult r = run_cli("decompose \"" + net + "\" --out \"" + out + "\"");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("layer 0") != std::string::npos);
    CHECK(r.out.find("rank=2") != std::string::npos);

    const nlohmann::json j = load_json_file(out);
    REQUIRE(j.contains("beta"));
    CHECK(j["beta"].get<double>() == 30.0);
    REQUIRE(j["layers"].is_array());
    REQUIRE(j["layers"].size() == 1);
    const auto& layer = j["layers"][0];
    for (const char* key : {"index", "rank", "Phi", "Psi", "Lambda", "Pi"})
        CHECK(layer.contains(key));
    CHECK(layer["rank"].get<int>() == 2);

    SECTION("rejects residual networks") {
        const std::string rnet = path_of("dec_res2.json");
        save_network(small_res2(5u, 3, 2), rnet);
        const RunResult bad = run_cli("decompose \"" + rnet + "\"");
        CHECK(bad.code == 1);
        CHECK(bad.err.find("option.invalid") != std::string::npos);
    }
}

TEST_CASE("flow-eval with Euler on the block grid reproduces the forward pass") {
    const Network net = small_res2(11u, 3, 4);
    const std::string net_path = path_of("fe_net.json");
    save_network(net, net_path);
    Vector x0(3);
    x0 << 0.3, -0.8, 0.5;
    const std::string in_path = write_vector("fe_input.json", x0);
    const std::string out_path = path_of("fe_out.json");

    // Default horizon is the layer count, so 4 Euler steps land exactly on
    // the block boundaries of the piecewise-constant field.
    const RunResult r = run_cli("flow-eval \"" + net_path + "\" --input \"" + in_path +
                                "\" --method euler --steps 4 --out \"" + out_path + "\"");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("max abs difference") != std::string::npos);

    const nlohmann::json j = load_json_file(out_path);
    const Vector got = detail::vector_from_json(j.at("final"), "final");
    const Vector want = eval_network(net, x0);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("rediscretize emits a loadable ResNet that tracks the plain net") {
    const std::string net_path = path_of("rd_net.json");
    save_network(small_plain_tanh(), net_path);
    Vector probe(2);
    probe << 0.4, -0.3;
    const std::string probe_path = write_vector("rd_probe.json", probe);
    const std::string out_path = path_of("rd_resnet.json");

    const RunResult r = run_cli("rediscretize \"" + net_path +
                                "\" --blocks-per-segment 32 --probe \"" + probe_path +
                                "\" --out \"" + out_path + "\"");
    REQUIRE(r.code == 0);
    const Network resnet = load_network(out_path);
    CHECK(resnet.dimension == 2);
    // whole-map linear part (one block) + 32 linearized pairs.
    CHECK(resnet.layers.size() == 1 + 2 * 32);
    CHECK(std::holds_alternative<LinearBlock>(resnet.layers.front()));

    Vector near_probe(2);
    near_probe << 0.42, -0.28;
    const std::string inputs_path = write_inputs("rd_inputs.json", {probe, near_probe});
    const std::string report_path = path_of("rd_compare.csv");
    const RunResult c = run_cli("compare \"" + net_path + "\" \"" + out_path + "\" --inputs \"" +
                                inputs_path + "\" --report \"" + report_path + "\"");
    REQUIRE(c.code == 0);
    CHECK(c.out.find("max_rel_err") != std::string::npos);

    const std::vector<std::string> lines = split_lines(slurp(report_path));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "input_index,abs_err,rel_err");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_csv(lines[i]);
        REQUIRE(fields.size() == 3);
        CHECK(std::stod(fields[2]) <= 0.05);
    }
}

TEST_CASE("converge on the built-in decay field reports first order and is deterministic") {
    const std::string rep1 = path_of("cv_1.csv");
    const std::string rep2 = path_of("cv_2.csv");
    const std::string args =
        "converge linear-decay --method euler --grids 16,32,64,128 --report ";
    REQUIRE(run_cli(args + "\"" + rep1 + "\"").code == 0);
    REQUIRE(run_cli(args + "\"" + rep2 + "\"").code == 0);
    CHECK(slurp(rep1) == slurp(rep2));

    const std::vector<std::string> lines = split_lines(slurp(rep1));
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "L,step,max_abs_err,rel_err,fitted_order");
    const auto last = split_csv(lines.back());
    REQUIRE(last.size() == 5);
    const double order = std::stod(last[4]);
    CHECK(order >= 0.9);
    CHECK(order <= 1.1);
}

TEST_CASE("random compare inputs are seeded and reproducible") {
    // Two slightly different nets so the error columns actually depend on the
    // drawn inputs.
    const Network a = small_plain_tanh();
    Network b = a;
    std::get<PlainLayer>(b.layers[0]).W(0, 0) += 0.01;
    const std::string a_path = path_of("seed_a.json");
    const std::string b_path = path_of("seed_b.json");
    save_network(a, a_path);
    save_network(b, b_path);

    auto compare_with = [&](const std::string& extra_args, const std::string& report,
                            const std::string& env = "") {
        const RunResult r =
            run_cli(extra_args + " compare \"" + a_path + "\" \"" + b_path +
                        "\" --random 6 --report \"" + report + "\"",
                    env);
        REQUIRE(r.code == 0);
        return slurp(report);
    };

    const std::string base1 = compare_with("", path_of("seed_r1.csv"));
    const std::string base2 = compare_with("", path_of("seed_r2.csv"));
    CHECK(base1 == base2);

    const std::string reseeded = compare_with("--seed 999", path_of("seed_r3.csv"));
    CHECK(reseeded != base1);

    // FLOWNET_SEED overrides the flag default, matching an explicit --seed.
    const std::string via_env = compare_with("", path_of("seed_r4.csv"), "FLOWNET_SEED=999");
    CHECK(via_env == reseeded);

    const RunResult bad = run_cli("compare \"" + a_path + "\" \"" + b_path + "\" --random 2",
                                  "FLOWNET_SEED=banana");
    CHECK(bad.code == 1);
    CHECK(bad.err.find("option.invalid") != std::string::npos);
}

TEST_CASE("solve-tvp writes one readout value per input") {
    const Network net = small_res2(17u, 3, 5);
    const std::string net_path = path_of("tvp_net.json");
    save_network(net, net_path);

    Vector w(3);
    w << 0.5, -1.0, 0.25;
    const double c = 0.25;
    const std::string term_path = path_of("tvp_terminal.json");
    save_json_file({{"w", detail::vector_to_json(w)}, {"c", c}}, term_path);

    std::mt19937_64 gen(23u);
    std::vector<Vector> inputs;
    for (int i = 0; i < 3; ++i) inputs.push_back(ref::random_vector(gen, 3));
    const std::string in_path = write_inputs("tvp_inputs.json", inputs);
    const std::string report = path_of("tvp_report.csv");

    const RunResult r = run_cli("solve-tvp \"" + net_path + "\" --terminal \"" + term_path +
                                "\" --inputs \"" + in_path +
                                "\" --method euler --steps 5 --report \"" + report + "\"");
    REQUIRE(r.code == 0);

    const std::vector<std::string> lines = split_lines(slurp(report));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "input_index,value");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_csv(lines[i]);
        REQUIRE(fields.size() == 2);
        CHECK(fields[0] == std::to_string(i - 1));
        // On the block grid the Euler characteristic is the exact forward
        // pass, so the terminal value is just the readout of it.
        const double want = w.dot(eval_network(net, inputs[i - 1])) + c;
        CHECK(std::stod(fields[1]) == Catch::Approx(want).margin(1e-9));
    }
}
