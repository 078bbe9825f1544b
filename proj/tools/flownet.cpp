// flownet: plain nets <-> continuous transport flows <-> explicit ResNets.
//
// Subcommands: decompose, flow-eval, solve-tvp, rediscretize, compare,
// converge. All numeric reports are CSV, all structured outputs JSON; runs
// are deterministic for a fixed seed (FLOWNET_SEED overrides --seed).

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flownet/flownet.hpp"

namespace fn = flownet;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string fmt_vec(const fn::Vector& v) {
    std::string out = "[";
    for (fn::Index i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt_short(v(i));
    }
    return out + "]";
}

// Uniform draw in [-1, 1], fixed bit path so outputs are identical across
// platforms (std::uniform_real_distribution is not).
double uniform_pm1(std::mt19937_64& gen) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

fn::Vector load_vector_file(const std::string& path) {
    return fn::detail::vector_from_json(fn::load_json_file(path), path);
}

std::vector<fn::Vector> load_inputs_file(const std::string& path) {
    const nlohmann::json j = fn::load_json_file(path);
    if (!j.is_array() || j.empty())
        fn::fail("parse.schema", path + ": expected a non-empty array of input vectors");
    std::vector<fn::Vector> xs;
    xs.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        xs.push_back(fn::detail::vector_from_json(j[i], path + "[" + std::to_string(i) + "]"));
    return xs;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fn::fail("io.write", "cannot open \"" + path + "\" for writing");
    out << text;
    if (!out) fn::fail("io.write", "failed writing \"" + path + "\"");
}

struct FieldSpec {
    fn::VelocityField field;
    // Closed-form final state from x0, when the field is a named builtin.
    std::function<fn::Vector(const fn::Vector&)> exact_final;
    bool builtin = false;
};

bool is_builtin_field(const std::string& name) {
    return name == "constant" || name == "linear-decay" || name == "rotation";
}

FieldSpec make_builtin_field(const std::string& name, double horizon) {
    FieldSpec spec;
    spec.builtin = true;
    if (name == "constant") {
        fn::Vector c(2);
        c << 1.0, -0.5;
        spec.field = fn::constant_field(c, horizon);
        spec.exact_final = [c, horizon](const fn::Vector& x0) -> fn::Vector {
            return x0 + horizon * c;
        };
    } else if (name == "linear-decay") {
        spec.field = fn::linear_decay_field(2, horizon);
        spec.exact_final = [horizon](const fn::Vector& x0) -> fn::Vector {
            return std::exp(-horizon) * x0;
        };
    } else {
        const double omega = std::numbers::pi / 2.0;
        spec.field = fn::rotation_field(omega, horizon);
        spec.exact_final = [omega, horizon](const fn::Vector& x0) -> fn::Vector {
            const double a = omega * horizon;
            fn::Vector y(2);
            y(0) = std::cos(a) * x0(0) - std::sin(a) * x0(1);
            y(1) = std::sin(a) * x0(0) + std::cos(a) * x0(1);
            return y;
        };
    }
    return spec;
}

// Shared flags for building a velocity field from a network file.
struct FlowOptions {
    double horizon = 0.0;  // 0: default to the layer count L
    double beta = 30.0;
    double eps_act = 0.05;
    std::string timescale = "quintic";
    std::string interp = "const";
};

void add_flow_options(CLI::App* cmd, FlowOptions& opt) {
    cmd->add_option("--horizon", opt.horizon, "Wall-clock horizon T (default: layer count)");
    cmd->add_option("--beta", opt.beta, "Projection strength beta for the linear decomposition");
    cmd->add_option("--eps-act", opt.eps_act, "Activation-flow truncation eps_act");
    cmd->add_option("--timescale", opt.timescale, "Time scaling h: quintic|bump");
    cmd->add_option("--interp", opt.interp,
                    "ResNet parameter interpolation in time: const|linear");
}

fn::VelocityField field_from_network(const fn::Network& net, const FlowOptions& opt) {
    const double T = opt.horizon > 0.0 ? opt.horizon : static_cast<double>(net.layers.size());
    if (std::holds_alternative<fn::PlainLayer>(net.layers.front()))
        return fn::build_network_flow(net, T, opt.beta, fn::TimeScale::parse(opt.timescale),
                                      opt.eps_act);
    return fn::resnet_to_flow(net, T, fn::parse_interpolation(opt.interp));
}

// ---------------------------------------------------------------- decompose

int run_decompose(const std::string& net_path, double beta, const std::string& out_path) {
    const fn::Network net = fn::load_network(net_path);
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto* plain = std::get_if<fn::PlainLayer>(&net.layers[i]);
        if (!plain)
            fn::fail("option.invalid", "decompose requires a plain-layer network (layer " +
                                           std::to_string(i) + " is not plain)");
        const fn::LinearDecomposition dec = fn::decompose(plain->W, beta);
        const double err = (fn::reconstruct(dec) - plain->W).norm();
        layers.push_back({{"index", i},
                          {"rank", dec.rank},
                          {"Phi", fn::detail::matrix_to_json(dec.Phi)},
                          {"Psi", fn::detail::matrix_to_json(dec.Psi)},
                          {"Lambda", fn::detail::vector_to_json(dec.Lambda)},
                          {"Pi", fn::detail::vector_to_json(dec.Pi)}});
        std::cout << "layer " << i << ": d=" << plain->W.rows() << " rank=" << dec.rank
                  << " reconstruction_error=" << fmt_short(err) << "\n";
    }
    const nlohmann::json out{{"beta", beta}, {"layers", layers}};
    if (!out_path.empty()) {
        fn::save_json_file(out, out_path);
        std::cout << "wrote " << out_path << "\n";
    } else {
        std::cout << out.dump(2) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- flow-eval

int run_flow_eval(const std::string& net_path, const std::string& input_path,
                  const std::string& method, std::size_t steps, const FlowOptions& opt,
                  const std::string& out_path) {
    const fn::Network net = fn::load_network(net_path);
    const fn::Vector x0 = load_vector_file(input_path);
    const fn::VelocityField field = field_from_network(net, opt);
    const fn::TimeGrid grid = fn::TimeGrid::uniform(0.0, field.horizon, steps);
    const fn::Trajectory tr = fn::integrate(field, x0, grid, fn::parse_stepper(method));
    const fn::Vector net_out = fn::eval_network(net, x0);
    const double diff = (tr.final_state() - net_out).cwiseAbs().maxCoeff();
    std::cout << "flow final state:   " << fmt_vec(tr.final_state()) << "\n";
    std::cout << "network evaluation: " << fmt_vec(net_out) << "\n";
    std::cout << "max abs difference: " << fmt_short(diff) << "\n";
    if (!out_path.empty()) {
        fn::save_json_file({{"final", fn::detail::vector_to_json(tr.final_state())}}, out_path);
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- solve-tvp

int run_solve_tvp(const std::string& net_path, const std::string& terminal_path,
                  const std::string& inputs_path, const std::string& method, std::size_t steps,
                  const FlowOptions& opt, const std::string& report_path) {
    const fn::Network net = fn::load_network(net_path);
    const nlohmann::json tj = fn::load_json_file(terminal_path);
    if (!tj.is_object() || !tj.contains("w"))
        fn::fail("parse.schema", terminal_path + ": expected {\"w\": [...], \"c\": scalar}");
    const fn::Vector w = fn::detail::vector_from_json(tj["w"], terminal_path + ".w");
    const double c = tj.contains("c") ? fn::detail::number_at(tj["c"], terminal_path + ".c") : 0.0;
    if (w.size() != net.dimension)
        fn::fail("dim.mismatch", "terminal readout has dimension " + std::to_string(w.size()) +
                                     ", network expects " + std::to_string(net.dimension));
    const std::vector<fn::Vector> inputs = load_inputs_file(inputs_path);

    const fn::TransportProblem problem = fn::make_transport_problem(
        field_from_network(net, opt),
        [w, c](const fn::Vector& x) { return w.dot(x) + c; });
    const fn::TimeGrid grid = fn::TimeGrid::uniform(0.0, problem.horizon, steps);
    const fn::Stepper stepper = fn::parse_stepper(method);

    std::string csv = "input_index,value\n";
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const double u0 = fn::solve_tvp(problem, inputs[i], grid, stepper);
        csv += std::to_string(i) + "," + fmt(u0) + "\n";
    }
    if (!report_path.empty()) {
        write_text_file(report_path, csv);
        std::cout << "solved " << inputs.size() << " inputs, wrote " << report_path << "\n";
    } else {
        std::cout << csv;
    }
    return 0;
}

// ------------------------------------------------------------- rediscretize

int run_rediscretize(const std::string& net_path, std::size_t blocks,
                     const std::string& linear_mode, const std::string& activation_mode,
                     const std::string& probe_path, double eps_act, double beta,
                     const std::string& timescale, bool tail_refine,
                     const std::string& out_path) {
    const fn::Network net = fn::load_network(net_path);
    fn::RediscretizationOptions opts;
    opts.blocks_per_segment = blocks;
    opts.linear_mode = fn::parse_linear_mode(linear_mode);
    opts.activation_mode = fn::parse_activation_mode(activation_mode);
    opts.eps_act = eps_act;
    opts.beta = beta;
    opts.ts = fn::TimeScale::parse(timescale);
    opts.tail_refine = tail_refine;
    const fn::Vector probe =
        probe_path.empty() ? fn::Vector(fn::Vector::Zero(net.dimension)) : load_vector_file(probe_path);
    const fn::Network resnet = fn::rediscretize_network(net, opts, probe);
    fn::save_network(resnet, out_path);
    std::cout << "rediscretized " << net.layers.size() << " plain layers into "
              << resnet.layers.size() << " blocks (l=" << blocks << ", linear=" << linear_mode
              << ", activation=" << activation_mode << ")\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// ------------------------------------------------------------------ compare

int run_compare(const std::string& a_path, const std::string& b_path,
                const std::string& inputs_path, std::size_t random_count, std::uint64_t seed,
                const std::string& report_path) {
    const fn::Network a = fn::load_network(a_path);
    const fn::Network b = fn::load_network(b_path);
    if (a.dimension != b.dimension)
        fn::fail("dim.mismatch", "networks have dimensions " + std::to_string(a.dimension) +
                                     " and " + std::to_string(b.dimension));
    std::vector<fn::Vector> inputs;
    if (!inputs_path.empty()) {
        inputs = load_inputs_file(inputs_path);
    } else {
        std::mt19937_64 gen(seed);
        inputs.reserve(random_count);
        for (std::size_t i = 0; i < random_count; ++i) {
            fn::Vector x(a.dimension);
            for (fn::Index j = 0; j < a.dimension; ++j) x(j) = uniform_pm1(gen);
            inputs.push_back(std::move(x));
        }
    }

    std::string csv = "input_index,abs_err,rel_err\n";
    double max_abs = 0.0, max_rel = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const fn::Vector ya = fn::eval_network(a, inputs[i]);
        const fn::Vector yb = fn::eval_network(b, inputs[i]);
        const double abs_err = (ya - yb).cwiseAbs().maxCoeff();
        const double rel_err = abs_err / std::max(ya.cwiseAbs().maxCoeff(), 1e-300);
        max_abs = std::max(max_abs, abs_err);
        max_rel = std::max(max_rel, rel_err);
        csv += std::to_string(i) + "," + fmt(abs_err) + "," + fmt(rel_err) + "\n";
    }
    if (!report_path.empty()) {
        write_text_file(report_path, csv);
        std::cout << "compared " << inputs.size() << " inputs, wrote " << report_path << "\n";
    } else {
        std::cout << csv;
    }
    std::cout << "max_abs_err=" << fmt_short(max_abs) << " max_rel_err=" << fmt_short(max_rel)
              << "\n";
    return 0;
}

// ----------------------------------------------------------------- converge

int run_converge(const std::string& source, const std::string& grids_arg,
                 const std::string& method, const std::string& input_path,
                 const FlowOptions& opt, std::uint64_t seed, const std::string& report_path) {
    std::vector<std::size_t> grids;
    {
        std::string token;
        for (char ch : grids_arg + ",") {
            if (ch == ',') {
                if (!token.empty()) {
                    char* end = nullptr;
                    const unsigned long v = std::strtoul(token.c_str(), &end, 10);
                    if (!end || *end != '\0' || v == 0)
                        fn::fail("option.invalid", "bad grid size \"" + token + "\"");
                    grids.push_back(v);
                    token.clear();
                }
            } else {
                token += ch;
            }
        }
    }

    FieldSpec spec;
    if (is_builtin_field(source)) {
        spec = make_builtin_field(source, opt.horizon > 0.0 ? opt.horizon : 1.0);
    } else {
        spec.field = field_from_network(fn::load_network(source), opt);
    }

    fn::Vector x0;
    if (!input_path.empty()) {
        x0 = load_vector_file(input_path);
    } else {
        std::mt19937_64 gen(seed);
        x0.resize(spec.field.dimension);
        for (fn::Index j = 0; j < x0.size(); ++j) x0(j) = uniform_pm1(gen);
    }

    fn::Vector reference;
    if (spec.builtin) {
        reference = spec.exact_final(x0);
    } else {
        // No closed form for network fields: reference is RK4 on a grid 8x
        // the finest requested one.
        const std::size_t ref_steps = 8 * grids.back();
        reference = fn::integrate_rk4(spec.field, x0,
                                      fn::TimeGrid::uniform(0.0, spec.field.horizon, ref_steps))
                        .final_state();
    }

    const fn::ConvergenceReport rep =
        fn::convergence_study(spec.field, x0, reference, grids, fn::parse_stepper(method));
    if (!report_path.empty()) {
        write_text_file(report_path, rep.to_csv());
        std::cout << "fitted_order=" << fmt_short(rep.fitted_order) << ", wrote " << report_path
                  << "\n";
    } else {
        std::cout << rep.to_csv();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flownet: neural networks as continuous transport flows"};
    app.require_subcommand(1);
    std::uint64_t seed = 12345;
    app.add_option("--seed", seed, "Seed for random input draws (env FLOWNET_SEED overrides)");

    // decompose
    std::string dec_net, dec_out;
    double dec_beta = 30.0;
    auto* dec = app.add_subcommand("decompose", "Rotation/stretch decomposition of plain layers");
    dec->add_option("net", dec_net, "Plain network JSON")->required();
    dec->add_option("--beta", dec_beta, "Projection strength beta");
    dec->add_option("--out", dec_out, "Output decomposition JSON");

    // flow-eval
    std::string fe_net, fe_input, fe_method = "rk4", fe_out;
    std::size_t fe_steps = 1000;
    FlowOptions fe_opt;
    auto* fe = app.add_subcommand("flow-eval", "Integrate a network's velocity field");
    fe->add_option("net", fe_net, "Network JSON (plain or res2)")->required();
    fe->add_option("--input", fe_input, "Input vector JSON")->required();
    fe->add_option("--method", fe_method, "Integrator: euler|rk4");
    fe->add_option("--steps", fe_steps, "Number of integration steps");
    fe->add_option("--out", fe_out, "Output JSON for the final state");
    add_flow_options(fe, fe_opt);

    // solve-tvp
    std::string tvp_net, tvp_terminal, tvp_inputs, tvp_method = "rk4", tvp_report;
    std::size_t tvp_steps = 1000;
    FlowOptions tvp_opt;
    auto* tvp = app.add_subcommand("solve-tvp",
                                   "Terminal value problem along characteristics");
    tvp->add_option("net", tvp_net, "Network JSON (plain or res2)")->required();
    tvp->add_option("--terminal", tvp_terminal, "Terminal readout JSON {\"w\":[...],\"c\":scalar}")
        ->required();
    tvp->add_option("--inputs", tvp_inputs, "JSON array of input vectors")->required();
    tvp->add_option("--method", tvp_method, "Integrator: euler|rk4");
    tvp->add_option("--steps", tvp_steps, "Number of integration steps");
    tvp->add_option("--report", tvp_report, "CSV output path (default: stdout)");
    add_flow_options(tvp, tvp_opt);

    // rediscretize
    std::string rd_net, rd_linear = "whole", rd_activation = "auto", rd_probe, rd_out;
    std::size_t rd_blocks = 32;
    double rd_eps = 0.05, rd_beta = 30.0;
    std::string rd_ts = "quintic";
    bool rd_tail = false;
    auto* rd = app.add_subcommand("rediscretize", "Plain net -> explicit ResNet blocks");
    rd->add_option("net", rd_net, "Plain network JSON")->required();
    rd->add_option("--blocks-per-segment", rd_blocks, "Euler blocks per flow segment (l)");
    rd->add_option("--linear", rd_linear, "Linear part: whole|blocks");
    rd->add_option("--activation", rd_activation, "Activation part: auto|exact|relu|linearized");
    rd->add_option("--probe", rd_probe, "Probe input JSON (linearization anchors)");
    rd->add_option("--eps-act", rd_eps, "Activation-flow truncation eps_act");
    rd->add_option("--beta", rd_beta, "Projection strength beta");
    rd->add_option("--timescale", rd_ts, "Time scaling h: quintic|bump");
    rd->add_flag("--tail-refine", rd_tail, "Geometric activation grid near tau = 1 - eps_act");
    rd->add_option("--out", rd_out, "Output ResNet JSON")->required();

    // compare
    std::string cmp_a, cmp_b, cmp_inputs, cmp_report;
    std::size_t cmp_random = 100;
    auto* cmp = app.add_subcommand("compare", "Evaluate two networks on shared inputs");
    cmp->add_option("a", cmp_a, "First network JSON")->required();
    cmp->add_option("b", cmp_b, "Second network JSON")->required();
    cmp->add_option("--inputs", cmp_inputs, "JSON array of input vectors");
    cmp->add_option("--random", cmp_random, "Random input count when --inputs is absent");
    cmp->add_option("--report", cmp_report, "CSV output path (default: stdout)");

    // converge
    std::string cv_source, cv_grids = "16,32,64,128", cv_method = "euler", cv_input, cv_report;
    FlowOptions cv_opt;
    auto* cv = app.add_subcommand("converge", "Grid-refinement convergence study");
    cv->add_option("net", cv_source,
                   "Network JSON, or builtin field: constant|linear-decay|rotation")
        ->required();
    cv->add_option("--grids", cv_grids, "Comma-separated grid sizes");
    cv->add_option("--method", cv_method, "Integrator: euler|rk4");
    cv->add_option("--input", cv_input, "Initial state JSON (default: seeded random)");
    cv->add_option("--report", cv_report, "CSV output path (default: stdout)");
    add_flow_options(cv, cv_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: cli.usage: " << e.what() << "\n";
        return 2;
    }

    if (const char* env_seed = std::getenv("FLOWNET_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env_seed, &end, 10);
        if (!end || *end != '\0') {
            std::cerr << "error: option.invalid: FLOWNET_SEED is not an integer\n";
            return 1;
        }
        seed = v;
    }

    try {
        if (dec->parsed()) return run_decompose(dec_net, dec_beta, dec_out);
        if (fe->parsed()) return run_flow_eval(fe_net, fe_input, fe_method, fe_steps, fe_opt, fe_out);
        if (tvp->parsed())
            return run_solve_tvp(tvp_net, tvp_terminal, tvp_inputs, tvp_method, tvp_steps, tvp_opt,
                                 tvp_report);
        if (rd->parsed())
            return run_rediscretize(rd_net, rd_blocks, rd_linear, rd_activation, rd_probe, rd_eps,
                                    rd_beta, rd_ts, rd_tail, rd_out);
        if (cmp->parsed())
            return run_compare(cmp_a, cmp_b, cmp_inputs, cmp_random, seed, cmp_report);
        if (cv->parsed())
            return run_converge(cv_source, cv_grids, cv_method, cv_input, cv_opt, seed, cv_report);
    } catch (const fn::Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
