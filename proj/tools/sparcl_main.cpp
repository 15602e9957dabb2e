#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sparcl/trainer.hpp"

namespace {

using namespace sparcl;

struct DataOptions {
    std::string source = "synthetic";  // "synthetic" or a directory of IDX files
    int tasks = 5;
    int classes_per_task = 2;
    std::size_t dim = 32;
    std::size_t n_per_class = 300;
    double separation = 3.0;
    std::uint32_t data_seed = 7;
};

void add_data_options(CLI::App* cmd, DataOptions& opts) {
    cmd->add_option("--data", opts.source,
                    "'synthetic' or a directory containing MNIST-style IDX files");
    cmd->add_option("--tasks", opts.tasks, "number of tasks in the stream");
    cmd->add_option("--classes-per-task", opts.classes_per_task, "classes per task");
    cmd->add_option("--dim", opts.dim, "synthetic input dimension");
    cmd->add_option("--n-per-class", opts.n_per_class, "synthetic examples per class");
    cmd->add_option("--separation", opts.separation, "synthetic class-mean separation");
    cmd->add_option("--data-seed", opts.data_seed, "seed for stream construction");
}

TaskStream load_stream(const DataOptions& opts) {
    if (opts.source == "synthetic") {
        return build_synthetic_tasks(opts.tasks, opts.classes_per_task, opts.dim,
                                     opts.n_per_class, opts.separation, opts.data_seed);
    }
    std::string dir = opts.source;
    Dataset train = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
    Dataset test = load_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
    return build_split_tasks(train, test, opts.tasks, opts.classes_per_task, opts.data_seed);
}

int run_train(const std::optional<std::string>& config_path,
              const std::vector<std::pair<std::string, std::string>>& overrides,
              const DataOptions& data, const std::string& out_dir, bool dump_buffer) {
    TrainConfig config = config_path ? parse_config_file(*config_path) : TrainConfig{};
    for (const auto& [key, value] : overrides) apply_config_entry(config, key, value);
    validate(config);
    TaskStream stream = load_stream(data);
    RunReport report = run_experiment(config, stream);
    emit_report(report, out_dir, dump_buffer);
    std::cout << "class-il avg " << report.class_il.average << "  task-il avg "
              << report.task_il.average << "  train flops " << report.flops.total() << "\n";
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

int run_eval(const std::string& checkpoint, const DataOptions& data, const std::string& mode) {
    Model model = load_model(checkpoint);
    TaskStream stream = load_stream(data);
    EvalMode m = mode == "task-il" ? EvalMode::task_il : EvalMode::class_il;
    AccuracyTable table = evaluate(model, stream, m);
    nlohmann::json j{{"mode", mode}, {"per_task", table.per_task}, {"average", table.average}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

template <class T>
int grad_check_one(const std::string& name, const ModelT<T>& model, const TensorT<T>& batch,
                   const std::vector<int>& labels, int samples, double tol) {
    std::mt19937 rng = make_rng(11, 99);
    GradCheckReport report = numeric_grad_check(model, batch, labels, samples, tol, rng);
    nlohmann::json j{{"model", name},
                     {"samples", report.samples},
                     {"tol", report.tol},
                     {"max_rel_error", report.max_rel_error},
                     {"worst", {{"layer", report.worst.layer},
                                {"bias", report.worst.bias},
                                {"index", report.worst.index},
                                {"analytic", report.worst.analytic},
                                {"numeric", report.worst.numeric}}},
                     {"passed", report.passed}};
    std::cout << j.dump(2) << "\n";
    return report.passed ? 0 : 1;
}

template <class T>
int run_grad_check_t(const std::string& arch, int samples, double tol) {
    std::mt19937 rng = make_rng(3, 17);
    std::normal_distribution<double> dist(0.0, 1.0);
    int rc = 0;
    auto random_batch = [&](std::vector<std::size_t> shape) {
        TensorT<T> t(std::move(shape));
        for (auto& v : t.data()) v = static_cast<T>(dist(rng));
        return t;
    };
    std::vector<int> labels{0, 3, 1, 2, 3, 0, 2, 1};
    if (arch == "mlp" || arch == "both") {
        ModelT<T> mlp = make_mlp<T>(20, 16, 4);
        init_weights(mlp, rng);
        rc |= grad_check_one("mlp", mlp, random_batch({8, 20}), labels, samples, tol);
    }
    if (arch == "cnn" || arch == "both") {
        ModelT<T> cnn = make_small_cnn<T>(1, 8, 8, 4);
        init_weights(cnn, rng);
        rc |= grad_check_one("cnn", cnn, random_batch({8, 1, 8, 8}), labels, samples, tol);
    }
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparcl: sparse continual-learning engine"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run a continual-learning experiment");
    std::optional<std::string> config_path;
    train->add_option("--config", config_path, "flat key=value config file");
    DataOptions train_data;
    add_data_options(train, train_data);
    std::string out_dir = "out";
    train->add_option("--out", out_dir, "output directory for the run report");
    bool dump_buffer = false;
    train->add_flag("--dump-buffer", dump_buffer, "also write buffer.jsonl");

    // CLI overrides land on top of the config file
    std::vector<std::pair<std::string, std::string>> overrides;
    auto add_override = [&](const std::string& flag, const std::string& key,
                            const std::string& help) {
        train
            ->add_option_function<std::string>(
                flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); },
                help)
            ->type_name("VAL");
    };
    add_override("--method", "method", "sgd|er|derpp|sparcl-er|sparcl-derpp");
    add_override("--sparsity", "sparsity", "weight sparsity ratio s in [0,1)");
    add_override("--gradient-extra-sparsity", "gradient_extra_sparsity",
                 "extra gradient sparsity q (enables DGM when > 0)");
    add_override("--rho", "rho", "data-removal fraction (enables DDR when > 0)");
    add_override("--cutoff", "cutoff", "last removal stage");
    add_override("--delta-k", "delta_k", "epochs per stage");
    add_override("--p-intra", "p_intra", "intra-task adjustment ratio");
    add_override("--p-inter", "p_inter", "inter-task adjustment ratio");
    add_override("--alpha", "alpha", "current-task gradient coefficient");
    add_override("--beta", "beta", "buffer gradient coefficient");
    add_override("--coeff-mse", "coeff_mse", "derpp logit-distillation coefficient");
    add_override("--coeff-ce", "coeff_ce", "derpp replay cross-entropy coefficient");
    add_override("--epochs", "epochs_per_task", "training epochs per task");
    add_override("--batch", "batch_size", "mini-batch size");
    add_override("--buffer", "buffer_capacity", "rehearsal buffer capacity");
    add_override("--lr", "lr", "learning rate");
    add_override("--seed", "seed", "run seed");
    add_override("--arch", "arch", "mlp|cnn");
    add_override("--hidden", "hidden", "mlp hidden width");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a task stream");
    std::string checkpoint;
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.json path")->required();
    DataOptions eval_data;
    add_data_options(eval_cmd, eval_data);
    std::string mode = "class-il";
    eval_cmd->add_option("--mode", mode, "class-il|task-il")
        ->check(CLI::IsMember({"class-il", "task-il"}));

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference check of backprop");
    std::string precision = "f32";
    gc->add_option("--precision", precision, "f32|f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    std::string gc_arch = "both";
    gc->add_option("--arch", gc_arch, "mlp|cnn|both")->check(CLI::IsMember({"mlp", "cnn", "both"}));
    int samples = 200;
    gc->add_option("--samples", samples, "parameters to sample");
    std::optional<double> tol;
    gc->add_option("--tol", tol, "max relative error (default 1e-4 f32, 1e-6 f64)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return run_train(config_path, overrides, train_data, out_dir, dump_buffer);
        if (*eval_cmd) return run_eval(checkpoint, eval_data, mode);
        if (*gc) {
            double t = tol.value_or(precision == "f64" ? 1e-6 : 1e-4);
            return precision == "f64" ? run_grad_check_t<double>(gc_arch, samples, t)
                                      : run_grad_check_t<float>(gc_arch, samples, t);
        }
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", {{"type", typeid(e).name()}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
