// Command-line front end for the causalkit pipeline: simulate traces, learn a
// constrained causal graph, fit and query the linear-Gaussian model, and
// estimate backdoor-adjusted treatment effects.

#include "causalkit/causalkit.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace causalkit;

constexpr std::uint64_t kDefaultSeed = 1729;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("CAUSALKIT_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return static_cast<std::uint64_t>(v);
        std::cerr << "warning: ignoring non-numeric CAUSALKIT_SEED='" << env << "'\n";
    }
    return kDefaultSeed;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::map<std::string, double> parse_evidence(const std::string& text) {
    std::map<std::string, double> out;
    for (const std::string& item : split_list(text)) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::runtime_error("evidence: expected name=value, got '" + item + "'");
        const std::string name = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (end != value.c_str() + value.size())
            throw std::runtime_error("evidence: bad value in '" + item + "'");
        out[name] = v;
    }
    return out;
}

// Shared constraint flags: built-in rules from --attack/--roots, extended and
// overridden by an optional constraints file.
struct ConstraintFlags {
    std::string file;
    std::vector<std::string> attacks;
    std::string roots_list;

    ConstraintSet assemble(const std::vector<std::string>& variables) const {
        ConstraintSet merged;
        const std::vector<std::string> roots = split_list(roots_list);
        if (!roots.empty() && attacks.empty())
            merged = builtin_constraints(variables, "", roots);
        for (const auto& attack : attacks)
            merged = ConstraintSet::merged(merged, builtin_constraints(variables, attack, roots));
        if (!file.empty()) merged = ConstraintSet::merged(merged, load_constraints(file));
        return merged;
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--constraints", file, "constraint file (enforce/forbid lines)");
        cmd->add_option("--attack", attacks, "attack column: gets no outgoing edges (repeatable)");
        cmd->add_option("--roots", roots_list,
                        "comma-separated hyper-parameter columns that get no incoming edges");
    }
};

struct LearnFlags {
    std::string traces;
    ConstraintFlags constraints;
    int replicates = 100;
    double threshold = -1.0;  // <0 means estimate via the L1 rule
    std::uint64_t seed = default_seed();
    bool use_standardize = false;
    int restarts = HillClimbOptions{}.restarts;
    int jobs = 1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--traces", traces, "trace CSV")->required();
        constraints.attach(cmd);
        cmd->add_option("-B,--replicates", replicates, "bootstrap replicates")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--threshold", threshold, "edge-presence threshold override in [0,1]");
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_flag("--standardize", use_standardize, "standardize columns before learning");
        cmd->add_option("--restarts", restarts, "random hill-climbing restarts")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--jobs", jobs, "parallel bootstrap workers")->check(CLI::PositiveNumber);
    }

    // Learned averaged graph plus the strengths it came from.
    std::pair<Dag, EdgeStrengths> run(const Dataset& traces_data, bool quiet = false) const {
        Dataset working = traces_data;
        if (use_standardize) {
            auto [scaled, st] = standardize(traces_data);
            working = scaled;
            int constant = 0;
            for (const auto& s : st.scales) constant += s.constant ? 1 : 0;
            if (constant > 0 && !quiet)
                std::cerr << "note: " << constant << " constant column(s) left unscaled\n";
        }
        const ConstraintSet c = constraints.assemble(working.columns());
        if (!quiet)
            std::cout << "constraints: " << c.enforce().size() << " enforce, "
                      << c.forbid().size() << " forbid (expanded)\n";
        HillClimbOptions options;
        options.restarts = restarts;
        const EdgeStrengths strengths =
            bootstrap_strengths(working, c, replicates, seed, jobs, options);

        double t = threshold;
        if (t < 0.0) {
            bool any_free = false;
            for (const auto& [edge, p] : strengths.strengths)
                if (!strengths.enforced.count(edge)) any_free = true;
            if (any_free) {
                t = l1_threshold(strengths);
            } else {
                t = 1.0;
                if (!quiet)
                    std::cerr << "note: no non-enforced edges learned; keeping enforce-only graph\n";
            }
        }
        if (!quiet)
            std::cout << "seed: " << seed << "\nreplicates: " << strengths.replicates
                      << "\nthreshold: " << format_double(t) << '\n';
        Dag g = averaged_graph(strengths, t, c);
        const ConstraintCheck check = check_constraints(g, c);
        if (!check.ok) {
            std::string msg = "learned graph violates constraints:";
            for (const auto& v : check.violations) msg += " " + v.describe() + ";";
            throw std::runtime_error(msg);
        }
        if (!quiet) std::cout << "edges kept: " << g.n_edges() << '\n';
        return {std::move(g), strengths};
    }
};

int run_simulate(const std::string& out_path, int rows, std::uint64_t seed, int nodes,
                 double edge_prob, double coef_range, double noise_sigma,
                 const std::string& sem_coeffs, const std::string& sem_params,
                 const std::string& truth_dot, const std::string& truth_coeffs,
                 const std::string& truth_params) {
    std::optional<SemSpec> sem;
    if (!sem_coeffs.empty() || !sem_params.empty()) {
        if (sem_coeffs.empty() || sem_params.empty())
            throw std::runtime_error("simulate: --sem-coeffs and --sem-params go together");
        sem = SemSpec{load_net(sem_coeffs, sem_params)};
    } else {
        sem = random_sem(nodes, edge_prob, coef_range, noise_sigma, seed);
    }
    std::cout << "seed: " << seed << '\n';
    const Dataset traces = sample(*sem, rows, child_seed(seed, 0));
    save_traces(traces, out_path);
    std::cout << "wrote " << traces.n_rows() << " rows x " << traces.n_cols() << " columns to "
              << out_path << '\n';
    if (!truth_dot.empty()) save_dot(sem->net.dag(), truth_dot, "ground_truth");
    if (!truth_coeffs.empty() || !truth_params.empty()) {
        if (truth_coeffs.empty() || truth_params.empty())
            throw std::runtime_error("simulate: --truth-coeffs and --truth-params go together");
        save_net(sem->net, truth_coeffs, truth_params);
    }
    return 0;
}

int run_learn(const LearnFlags& flags, const std::string& out_dot,
              const std::string& out_strengths) {
    const Dataset traces = load_traces(flags.traces);
    const auto [graph, strengths] = flags.run(traces);
    save_dot(graph, out_dot, "averaged");
    std::cout << "wrote graph to " << out_dot << '\n';
    if (!out_strengths.empty()) {
        save_strengths(strengths, out_strengths);
        std::cout << "wrote strengths to " << out_strengths << '\n';
    }
    return 0;
}

void print_query_result(const QueryResult& row) {
    if (!row.ok) {
        std::cout << row.query.treatment << " -> " << row.query.outcome << ": error: " << row.error
                  << '\n';
        return;
    }
    const AteEstimate& ate = row.estimate;
    std::cout << row.query.treatment << " -> " << row.query.outcome
              << ": ate=" << format_double(ate.value) << " (a=" << format_double(ate.a)
              << ", b=" << format_double(ate.b) << ", se=" << format_double(ate.std_error)
              << ", p=" << format_double(ate.p_value) << ", adjust=";
    if (ate.adjustment_set.empty()) {
        std::cout << "{}";
    } else {
        std::cout << "{";
        for (std::size_t i = 0; i < ate.adjustment_set.size(); ++i)
            std::cout << (i ? "," : "") << ate.adjustment_set[i];
        std::cout << "}";
    }
    std::cout << ") " << query_class_name(row.classification) << " "
              << query_class_mark(row.classification) << '\n';
}

int run_ate(const std::string& traces_path, const std::string& graph_path, bool learn_inline,
            const LearnFlags& learn_flags, const std::string& treatment,
            const std::string& outcome, std::optional<double> a, std::optional<double> b,
            const std::string& adjust, bool no_minimize, double epsilon,
            const std::string& p_method, int p_replicates, std::uint64_t seed,
            const std::string& suite_path, const std::string& out_path, bool with_naive) {
    const Dataset traces = load_traces(traces_path);
    Dag graph({});
    if (learn_inline) {
        graph = learn_flags.run(traces).first;
    } else if (!graph_path.empty()) {
        graph = load_dot(graph_path);
    } else {
        throw std::runtime_error("ate: provide --graph or --learn");
    }
    for (const auto& node : graph.nodes())
        if (!traces.has_column(node))
            throw std::runtime_error("ate: graph node '" + node + "' is not a trace column");

    AteOptions options;
    options.seed = seed;
    options.bootstrap_replicates = p_replicates;
    if (p_method == "bootstrap") {
        options.p_method = PValueMethod::Bootstrap;
    } else if (p_method != "ttest") {
        throw std::runtime_error("ate: unknown --p-method '" + p_method + "'");
    }

    std::vector<QueryResult> rows;
    if (!suite_path.empty()) {
        const auto suite = load_query_suite(suite_path);
        rows = run_query_suite(traces, graph, suite, epsilon, options);
    } else {
        if (treatment.empty() || outcome.empty())
            throw std::runtime_error("ate: provide --treatment and --outcome, or --suite");
        QueryResult row;
        row.query = {treatment, outcome};
        if (!adjust.empty()) {
            Estimand e;
            e.treatment = treatment;
            e.outcome = outcome;
            e.identifiable = true;
            e.adjustment_set = split_list(adjust);
            std::sort(e.adjustment_set.begin(), e.adjustment_set.end());
            e.expression = "user-specified adjustment";
            row.estimand = e;
        } else {
            row.estimand = identify_backdoor(graph, treatment, outcome, !no_minimize);
        }
        const Eigen::VectorXd t = traces.column(treatment);
        const double hi = a.value_or(t.maxCoeff());
        const double lo = b.value_or(t.minCoeff());
        row.estimate = estimate_ate(traces, row.estimand, hi, lo, options);
        row.classification = classify_query(row.estimate, epsilon);
        row.ok = true;
        rows.push_back(std::move(row));
        if (with_naive) {
            const double naive = naive_conditional_effect(traces, treatment, outcome, hi, lo);
            std::cout << "naive conditional contrast: " << format_double(naive) << '\n';
        }
    }
    for (const QueryResult& row : rows) print_query_result(row);
    if (!out_path.empty()) {
        save_query_table(rows, out_path);
        std::cout << "wrote query table to " << out_path << '\n';
    }
    for (const QueryResult& row : rows)
        if (!row.ok) return 1;
    return 0;
}

int run_predict(const std::string& traces_path, const std::string& graph_path,
                const std::string& target, const std::string& evidence_text,
                const std::string& save_net_prefix) {
    const Dataset traces = load_traces(traces_path);
    const Dag graph = load_dot(graph_path);
    const LinearGaussianNet net = fit(traces, graph);
    const auto evidence = parse_evidence(evidence_text);
    bool rank_deficient = false;
    const double value = predict(net, evidence, target, &rank_deficient);
    if (rank_deficient)
        std::cerr << "warning: singular evidence block; used the pseudo-inverse\n";
    std::cout << "predicted " << target << " = " << format_double(value) << '\n';
    if (!save_net_prefix.empty()) {
        save_net(net, save_net_prefix + ".coeffs.csv", save_net_prefix + ".params.csv");
        std::cout << "wrote net to " << save_net_prefix << ".{coeffs,params}.csv\n";
    }
    return 0;
}

// Per-fold metrics when the structure is re-learned on each train split
// instead of held fixed.
PredictiveReport relearn_cv_metrics(const Dataset& traces, const std::string& target,
                                    const SplitPlan& plan, LearnFlags learn_flags,
                                    std::vector<RunMetrics>* per_run) {
    PredictiveReport report;
    double corr_sum = 0.0;
    double mse_sum = 0.0;
    const auto splits = cv_splits(traces, plan);
    for (std::size_t run = 0; run < splits.size(); ++run) {
        const auto& [train, test] = splits[run];
        learn_flags.seed = child_seed(plan.seed, 100000 + run);
        const Dag graph = learn_flags.run(train, /*quiet=*/true).first;
        const LinearGaussianNet net = fit(train, graph);
        std::vector<std::string> evidence_cols;
        for (const auto& name : graph.nodes())
            if (name != target) evidence_cols.push_back(name);
        const GaussianConditioner cond(to_joint(net), evidence_cols, target);

        Eigen::VectorXd evidence(static_cast<Eigen::Index>(evidence_cols.size()));
        Eigen::VectorXd predicted(test.n_rows());
        for (Eigen::Index r = 0; r < test.n_rows(); ++r) {
            for (std::size_t e = 0; e < evidence_cols.size(); ++e)
                evidence[static_cast<Eigen::Index>(e)] =
                    test.values()(r, test.column_index(evidence_cols[e]));
            predicted[r] = cond.predict(evidence);
        }
        const Eigen::VectorXd observed = test.column(target);

        RunMetrics rm;
        rm.run = static_cast<int>(run);
        if ((observed.array() - observed.mean()).square().sum() <= 0.0) {
            rm.skipped = true;
            ++report.skipped;
        } else {
            rm.correlation = pearson(predicted, observed).value_or(0.0);
            rm.mse = (predicted - observed).squaredNorm() / static_cast<double>(test.n_rows());
            corr_sum += rm.correlation;
            mse_sum += rm.mse;
            ++report.runs;
        }
        if (per_run) per_run->push_back(rm);
    }
    if (report.runs > 0) {
        report.mean_correlation = corr_sum / report.runs;
        report.mean_mse = mse_sum / report.runs;
    }
    return report;
}

int run_cv(const std::string& traces_path, const std::string& graph_path,
           const std::string& target, int runs, double train_fraction, std::uint64_t seed,
           const std::string& out_path, const std::string& baseline_out,
           const std::string& save_net_prefix, bool relearn, const LearnFlags& learn_flags) {
    const Dataset traces = load_traces(traces_path);
    SplitPlan plan;
    plan.runs = runs;
    plan.train_fraction = train_fraction;
    plan.seed = seed;
    if (!relearn && graph_path.empty())
        throw std::runtime_error("cv: provide --graph, or --relearn to learn per fold");
    traces.column_index(target);
    std::vector<RunMetrics> per_run;
    PredictiveReport report;
    if (relearn) {
        report = relearn_cv_metrics(traces, target, plan, learn_flags, &per_run);
    } else {
        const Dag graph = load_dot(graph_path);
        report = cv_predictive_metrics(traces, graph, target, plan, &per_run);
    }
    std::cout << "seed: " << seed << '\n';
    std::cout << "runs: " << report.runs << " (skipped " << report.skipped << ")\n";
    std::cout << "mean predictive correlation: " << format_double(report.mean_correlation) << '\n';
    std::cout << "mean squared error: " << format_double(report.mean_mse) << '\n';
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cv: cannot open '" + out_path + "'");
        out << "run,correlation,mse,skipped\n";
        for (const RunMetrics& rm : per_run)
            out << rm.run << ',' << format_double(rm.correlation) << ',' << format_double(rm.mse)
                << ',' << (rm.skipped ? 1 : 0) << '\n';
        std::cout << "wrote per-run metrics to " << out_path << '\n';
    }
    if (!baseline_out.empty()) {
        std::ofstream out(baseline_out);
        if (!out) throw std::runtime_error("cv: cannot open '" + baseline_out + "'");
        out << "variable,correlation,constant\n";
        for (const CorrelationEntry& entry : pearson_baseline(traces, target))
            out << entry.variable << ',' << format_double(entry.correlation) << ','
                << (entry.constant ? 1 : 0) << '\n';
        std::cout << "wrote Pearson baseline to " << baseline_out << '\n';
    }
    if (!save_net_prefix.empty()) {
        const Dag graph = relearn ? learn_flags.run(traces, /*quiet=*/true).first
                                  : load_dot(graph_path);
        const LinearGaussianNet net = fit(traces, graph);
        save_net(net, save_net_prefix + ".coeffs.csv", save_net_prefix + ".params.csv");
        std::cout << "wrote net to " << save_net_prefix << ".{coeffs,params}.csv\n";
    }
    return 0;
}

int run_derive(const std::string& traces_path, const std::string& predictions_path,
               const std::string& labels_path, const std::string& holdout_predictions_path,
               const std::string& holdout_labels_path, const std::string& loss,
               const std::string& estimator_name, const std::string& scale,
               const std::string& out_path) {
    if (!traces_path.empty()) {
        Dataset traces = load_traces(traces_path);
        if (!traces.has_column("AccDiff") && traces.has_column("TrainAcc") &&
            traces.has_column("TestAcc"))
            traces = traces.with_column("AccDiff",
                                        gap(traces.column("TrainAcc"), traces.column("TestAcc")));
        if (!traces.has_column("LossDiff") && traces.has_column("TrainLoss") &&
            traces.has_column("TestLoss"))
            traces = traces.with_column(
                "LossDiff", gap(traces.column("TestLoss"), traces.column("TrainLoss")));
        save_traces(traces, out_path);
        std::cout << "wrote " << traces.n_cols() << " columns to " << out_path << '\n';
        return 0;
    }

    if (predictions_path.empty() || labels_path.empty())
        throw std::runtime_error("derive: provide --traces, or --predictions with --labels");
    if (loss != "mse" && loss != "ce")
        throw std::runtime_error("derive: --loss must be mse or ce");
    PredictionKind kind = PredictionKind::Raw;
    if (scale == "prob") {
        kind = PredictionKind::Probability;
    } else if (scale == "logprob") {
        kind = PredictionKind::LogProbability;
    } else if (scale == "raw") {
        kind = PredictionKind::Raw;
    } else if (scale.empty()) {
        kind = loss == "ce" ? PredictionKind::Probability : PredictionKind::Raw;
    } else {
        throw std::runtime_error("derive: --scale must be prob, logprob or raw");
    }
    VarianceEstimator estimator = VarianceEstimator::Unbiased;
    if (estimator_name == "population") {
        estimator = VarianceEstimator::Population;
    } else if (estimator_name != "unbiased") {
        throw std::runtime_error("derive: --estimator must be unbiased or population");
    }

    auto decompose = [&](const PredictionBatch& batch) {
        return loss == "mse" ? mse_decompose(batch, estimator) : ce_decompose(batch);
    };

    const PredictionBatch members = load_predictions(predictions_path, labels_path, kind);
    const BiasVariance train = decompose(members);
    std::vector<std::string> columns = {"TrainLoss", "TrainVar", "TrainBias"};
    std::vector<double> cells = {train.loss, train.variance, train.bias};

    if (!holdout_predictions_path.empty()) {
        if (holdout_labels_path.empty())
            throw std::runtime_error("derive: --holdout-predictions needs --holdout-labels");
        const PredictionBatch nonmembers =
            load_predictions(holdout_predictions_path, holdout_labels_path, kind);
        const BiasVariance test = decompose(nonmembers);
        columns.insert(columns.end(), {"TestLoss", "TestVar", "TestBias", "CentroidDist"});
        cells.insert(cells.end(), {test.loss, test.variance, test.bias, 0.0});
        if (members.n_models() != nonmembers.n_models())
            throw std::runtime_error("derive: member and holdout batches trained different model counts");
        std::vector<double> distances;
        for (Eigen::Index j = 0; j < members.n_models(); ++j)
            distances.push_back(centroid_distance(members.model(j), nonmembers.model(j)));
        cells.back() = average_over_splits(distances, distances.size());
    }

    Eigen::MatrixXd row(1, static_cast<Eigen::Index>(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = cells[i];
    const Dataset stats(columns, row);
    save_traces(stats, out_path);
    for (std::size_t i = 0; i < columns.size(); ++i)
        std::cout << columns[i] << " = " << format_double(cells[i]) << '\n';
    std::cout << "wrote derived statistics to " << out_path << '\n';
    return 0;
}

int run_export_dot(const std::string& strengths_path, double threshold,
                   const std::string& traces_path, const ConstraintFlags& constraint_flags,
                   const std::string& out_path) {
    EdgeStrengths strengths = load_strengths(strengths_path);
    std::vector<std::string> variables = strengths.nodes;
    if (!traces_path.empty()) {
        const Dataset traces = load_traces(traces_path);
        variables = traces.columns();
        strengths.nodes = variables;
    }
    const ConstraintSet c = constraint_flags.assemble(variables);
    strengths.enforced = c.enforce();
    double t = threshold;
    if (t < 0.0) t = l1_threshold(strengths);
    const Dag g = averaged_graph(strengths, t, c);
    std::cout << "threshold: " << format_double(t) << "\nedges kept: " << g.n_edges() << '\n';
    save_dot(g, out_path, "averaged");
    std::cout << "wrote graph to " << out_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal discovery and treatment-effect analysis over experiment traces"};
    app.require_subcommand(1);

    // simulate
    auto* simulate_cmd = app.add_subcommand("simulate", "sample traces from a linear-Gaussian SEM");
    std::string sim_out, sem_coeffs, sem_params, truth_dot, truth_coeffs, truth_params;
    int sim_rows = 1000, sim_nodes = 6;
    double sim_edge_prob = 0.3, sim_coef_range = 1.5, sim_noise = 0.5;
    std::uint64_t sim_seed = default_seed();
    simulate_cmd->add_option("--out", sim_out, "output trace CSV")->required();
    simulate_cmd->add_option("--rows", sim_rows, "rows to sample")->check(CLI::PositiveNumber);
    simulate_cmd->add_option("--seed", sim_seed, "random seed");
    simulate_cmd->add_option("--nodes", sim_nodes, "random SEM: node count");
    simulate_cmd->add_option("--edge-prob", sim_edge_prob, "random SEM: edge probability");
    simulate_cmd->add_option("--coef-range", sim_coef_range, "random SEM: max |coefficient|");
    simulate_cmd->add_option("--noise-sigma", sim_noise, "random SEM: noise sigma");
    simulate_cmd->add_option("--sem-coeffs", sem_coeffs, "explicit SEM: coefficient CSV");
    simulate_cmd->add_option("--sem-params", sem_params, "explicit SEM: intercept/variance CSV");
    simulate_cmd->add_option("--truth-dot", truth_dot, "write the ground-truth DAG here");
    simulate_cmd->add_option("--truth-coeffs", truth_coeffs, "write ground-truth coefficients here");
    simulate_cmd->add_option("--truth-params", truth_params, "write ground-truth parameters here");

    // learn
    auto* learn_cmd = app.add_subcommand("learn", "learn the averaged causal graph from traces");
    LearnFlags learn_flags;
    std::string learn_out_dot, learn_out_strengths;
    learn_flags.attach(learn_cmd);
    learn_cmd->add_option("--out-dot", learn_out_dot, "output DOT path")->required();
    learn_cmd->add_option("--out-strengths", learn_out_strengths, "output strengths CSV");

    // ate
    auto* ate_cmd = app.add_subcommand("ate", "backdoor-adjusted average treatment effects");
    std::string ate_traces, ate_graph, ate_treatment, ate_outcome, ate_adjust, ate_suite, ate_out;
    std::string ate_p_method = "ttest";
    double ate_a = 0.0, ate_b = 0.0, ate_epsilon = 1e-3;
    bool ate_learn = false, ate_no_minimize = false, ate_naive = false;
    int ate_p_replicates = 200;
    std::uint64_t ate_seed = default_seed();
    LearnFlags ate_learn_flags;
    ate_cmd->add_option("--traces", ate_traces, "trace CSV")->required();
    ate_cmd->add_option("--graph", ate_graph, "causal graph DOT path");
    ate_cmd->add_flag("--learn", ate_learn, "learn the graph inline instead of --graph");
    ate_learn_flags.constraints.attach(ate_cmd);
    ate_cmd->add_option("-B,--replicates", ate_learn_flags.replicates,
                        "inline learn: bootstrap replicates");
    ate_cmd->add_option("--threshold", ate_learn_flags.threshold,
                        "inline learn: strength threshold override");
    ate_cmd->add_option("--jobs", ate_learn_flags.jobs, "inline learn: parallel workers");
    ate_cmd->add_option("--treatment", ate_treatment, "treatment column");
    ate_cmd->add_option("--outcome", ate_outcome, "outcome column");
    auto* opt_a = ate_cmd->add_option("--a", ate_a, "treatment level (default: observed max)");
    auto* opt_b = ate_cmd->add_option("--b", ate_b, "control level (default: observed min)");
    ate_cmd->add_option("--adjust", ate_adjust, "comma-separated adjustment override");
    ate_cmd->add_flag("--no-minimize", ate_no_minimize, "adjust for the treatment's parents");
    ate_cmd->add_option("--epsilon", ate_epsilon, "zero-effect classification band");
    ate_cmd->add_option("--p-method", ate_p_method, "p-value method: ttest or bootstrap");
    ate_cmd->add_option("--p-replicates", ate_p_replicates, "bootstrap p-value replicates");
    ate_cmd->add_option("--seed", ate_seed, "random seed");
    ate_cmd->add_option("--suite", ate_suite, "file of 'treatment -> outcome' lines");
    ate_cmd->add_option("--out", ate_out, "output query table CSV");
    ate_cmd->add_flag("--naive", ate_naive, "also print the unadjusted conditional contrast");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "conditional-mean prediction queries");
    std::string pred_traces, pred_graph, pred_target, pred_evidence, pred_save_net;
    predict_cmd->add_option("--traces", pred_traces, "trace CSV")->required();
    predict_cmd->add_option("--graph", pred_graph, "causal graph DOT path")->required();
    predict_cmd->add_option("--target", pred_target, "target column")->required();
    predict_cmd->add_option("--evidence", pred_evidence, "comma-separated name=value pairs");
    predict_cmd->add_option("--save-net", pred_save_net, "write the fitted net with this prefix");

    // cv
    auto* cv_cmd = app.add_subcommand("cv", "cross-validated predictive power of a graph");
    std::string cv_traces, cv_graph, cv_target, cv_out, cv_baseline_out, cv_save_net;
    int cv_runs = 20;
    double cv_fraction = 0.8;
    bool cv_relearn = false;
    std::uint64_t cv_seed = default_seed();
    LearnFlags cv_learn_flags;
    cv_cmd->add_option("--traces", cv_traces, "trace CSV")->required();
    cv_cmd->add_option("--graph", cv_graph, "causal graph DOT path");
    cv_cmd->add_option("--target", cv_target, "target column")->required();
    cv_cmd->add_option("--runs", cv_runs, "cross-validation runs")->check(CLI::PositiveNumber);
    cv_cmd->add_option("--train-fraction", cv_fraction, "train fraction per run");
    cv_cmd->add_option("--seed", cv_seed, "random seed");
    cv_cmd->add_option("--out", cv_out, "per-run metrics CSV");
    cv_cmd->add_option("--baseline-out", cv_baseline_out, "Pearson baseline CSV");
    cv_cmd->add_option("--save-net", cv_save_net, "write the full-data net with this prefix");
    cv_cmd->add_flag("--relearn", cv_relearn,
                     "re-learn the structure on each train split instead of using --graph");
    cv_learn_flags.constraints.attach(cv_cmd);
    cv_cmd->add_option("-B,--replicates", cv_learn_flags.replicates,
                       "relearn: bootstrap replicates");
    cv_cmd->add_option("--threshold", cv_learn_flags.threshold,
                       "relearn: edge-presence threshold override");
    cv_cmd->add_option("--jobs", cv_learn_flags.jobs, "relearn: parallel workers");

    // derive
    auto* derive_cmd =
        app.add_subcommand("derive", "derived trace columns and loss decompositions");
    std::string derive_traces, derive_preds, derive_labels, derive_holdout_preds,
        derive_holdout_labels, derive_loss = "mse", derive_estimator = "unbiased", derive_scale,
        derive_out;
    derive_cmd->add_option("--traces", derive_traces, "trace CSV to extend with gap columns");
    derive_cmd->add_option("--predictions", derive_preds,
                           "member predictions CSV (model_id,sample_id,class_*)");
    derive_cmd->add_option("--labels", derive_labels, "member labels CSV (sample_id,class)");
    derive_cmd->add_option("--holdout-predictions", derive_holdout_preds,
                           "non-member predictions CSV");
    derive_cmd->add_option("--holdout-labels", derive_holdout_labels, "non-member labels CSV");
    derive_cmd->add_option("--loss", derive_loss, "loss decomposition: mse or ce");
    derive_cmd->add_option("--estimator", derive_estimator,
                           "mse variance estimator: unbiased or population");
    derive_cmd->add_option("--scale", derive_scale, "prediction scale: prob, logprob or raw");
    derive_cmd->add_option("--out", derive_out, "output CSV")->required();

    // export-dot
    auto* export_cmd =
        app.add_subcommand("export-dot", "re-threshold saved strengths into a DOT graph");
    std::string export_strengths, export_traces, export_out;
    double export_threshold = -1.0;
    ConstraintFlags export_constraints;
    export_cmd->add_option("--strengths", export_strengths, "strengths CSV from learn")->required();
    export_cmd->add_option("--threshold", export_threshold, "strength threshold override");
    export_cmd->add_option("--traces", export_traces, "trace CSV supplying the node set");
    export_constraints.attach(export_cmd);
    export_cmd->add_option("--out", export_out, "output DOT path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (simulate_cmd->parsed())
            return run_simulate(sim_out, sim_rows, sim_seed, sim_nodes, sim_edge_prob,
                                sim_coef_range, sim_noise, sem_coeffs, sem_params, truth_dot,
                                truth_coeffs, truth_params);
        if (learn_cmd->parsed()) return run_learn(learn_flags, learn_out_dot, learn_out_strengths);
        if (ate_cmd->parsed()) {
            ate_learn_flags.traces = ate_traces;
            ate_learn_flags.seed = ate_seed;
            return run_ate(ate_traces, ate_graph, ate_learn, ate_learn_flags, ate_treatment,
                           ate_outcome,
                           opt_a->count() ? std::optional<double>(ate_a) : std::nullopt,
                           opt_b->count() ? std::optional<double>(ate_b) : std::nullopt, ate_adjust,
                           ate_no_minimize, ate_epsilon, ate_p_method, ate_p_replicates, ate_seed,
                           ate_suite, ate_out, ate_naive);
        }
        if (predict_cmd->parsed())
            return run_predict(pred_traces, pred_graph, pred_target, pred_evidence, pred_save_net);
        if (cv_cmd->parsed()) {
            cv_learn_flags.traces = cv_traces;
            return run_cv(cv_traces, cv_graph, cv_target, cv_runs, cv_fraction, cv_seed, cv_out,
                          cv_baseline_out, cv_save_net, cv_relearn, cv_learn_flags);
        }
        if (derive_cmd->parsed())
            return run_derive(derive_traces, derive_preds, derive_labels, derive_holdout_preds,
                              derive_holdout_labels, derive_loss, derive_estimator, derive_scale,
                              derive_out);
        if (export_cmd->parsed())
            return run_export_dot(export_strengths, export_threshold, export_traces,
                                  export_constraints, export_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
