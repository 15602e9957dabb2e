#include "sparcl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace sparcl {

Method parse_method(const std::string& name) {
    if (name == "sgd") return Method::sgd;
    if (name == "er") return Method::er;
    if (name == "derpp") return Method::derpp;
    if (name == "sparcl-er") return Method::sparcl_er;
    if (name == "sparcl-derpp") return Method::sparcl_derpp;
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected sgd|er|derpp|sparcl-er|sparcl-derpp)");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::sgd: return "sgd";
        case Method::er: return "er";
        case Method::derpp: return "derpp";
        case Method::sparcl_er: return "sparcl-er";
        case Method::sparcl_derpp: return "sparcl-derpp";
    }
    return "?";
}

bool is_sparcl(Method m) { return m == Method::sparcl_er || m == Method::sparcl_derpp; }

void validate(const TrainConfig& c) {
    if (c.sparsity < 0.0 || c.sparsity >= 1.0) {
        throw std::invalid_argument("sparsity must lie in [0,1)");
    }
    if (c.gradient_extra_sparsity < 0.0 ||
        c.sparsity + c.gradient_extra_sparsity >= 1.0) {
        throw std::invalid_argument("gradient extra sparsity must keep s+q in [0,1)");
    }
    if (c.rho < 0.0 || c.rho > 1.0) throw std::invalid_argument("rho must be in [0,1]");
    if (c.cutoff < 1) throw std::invalid_argument("cutoff must be >= 1");
    if (c.delta_k < 1) throw std::invalid_argument("delta_k must be >= 1");
    if (c.p_intra < 0.0 || c.p_inter < 0.0) {
        throw std::invalid_argument("mask adjustment ratios must be non-negative");
    }
    if (c.tdm_on()) {
        if (c.sparsity <= 0.0) {
            throw std::invalid_argument(method_name(c.method) + " requires sparsity > 0");
        }
        if (c.p_inter > c.sparsity) {
            throw std::invalid_argument("p_inter must not exceed the sparsity ratio");
        }
    }
    if (c.coeff_mse < 0.0 || c.coeff_ce < 0.0) {
        throw std::invalid_argument("replay coefficients must be non-negative");
    }
    if (c.epochs_per_task < 1) throw std::invalid_argument("epochs_per_task must be >= 1");
    if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (c.lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (c.arch != "mlp" && c.arch != "cnn") {
        throw std::invalid_argument("arch must be mlp or cnn");
    }
    if (c.hidden < 1) throw std::invalid_argument("hidden width must be >= 1");
    if (c.precision != "f32" && c.precision != "f64") {
        throw std::invalid_argument("precision must be f32 or f64");
    }
}

namespace defaults {

double paired_gradient_extra_sparsity(double sparsity) {
    if (std::abs(sparsity - 0.75) < 1e-9) return 0.05;
    if (std::abs(sparsity - 0.90) < 1e-9) return 0.02;
    return 0.0;
}

}  // namespace defaults

namespace {

Model build_model(const TrainConfig& config, const TaskStream& stream) {
    const Tensor& probe = stream.tasks.front().train.inputs;
    Model model;
    if (config.arch == "mlp") {
        model = make_mlp<float>(row_numel(probe), static_cast<std::size_t>(config.hidden),
                                stream.class_count);
    } else {
        if (probe.rank() != 4) {
            throw std::invalid_argument("cnn arch needs [n,C,H,W] input data");
        }
        model = make_small_cnn<float>(probe.dim(1), probe.dim(2), probe.dim(3),
                                      stream.class_count);
    }
    for (const Task& t : stream.tasks) model.task_class_ranges.push_back(t.classes);
    return model;
}

void check_stream(const TaskStream& stream) {
    if (stream.tasks.empty()) throw std::invalid_argument("task stream is empty");
    std::unordered_set<ExampleId> seen;
    for (std::size_t a = 0; a < stream.tasks.size(); ++a) {
        const Task& ta = stream.tasks[a];
        if (ta.train.size() == 0) throw std::invalid_argument("task with empty training set");
        for (std::size_t b = a + 1; b < stream.tasks.size(); ++b) {
            const Task& tb = stream.tasks[b];
            bool overlap = ta.classes.begin < tb.classes.end && tb.classes.begin < ta.classes.end;
            if (overlap) throw std::invalid_argument("task class ranges overlap");
        }
        for (ExampleId id : ta.train.ids) {
            if (!seen.insert(id).second) throw std::invalid_argument("duplicate example id");
        }
        for (ExampleId id : ta.test.ids) {
            if (!seen.insert(id).second) throw std::invalid_argument("duplicate example id");
        }
    }
}

}  // namespace

RunReport run_experiment(const TrainConfig& config, const TaskStream& stream,
                         const TrainerHooks* hooks) {
    validate(config);
    if (config.precision != "f32") {
        throw std::invalid_argument("run_experiment trains in f32; f64 exists for grad-check");
    }
    check_stream(stream);

    const Tensor& probe = stream.tasks.front().train.inputs;
    std::size_t input_h = probe.rank() == 4 ? probe.dim(2) : 0;
    std::size_t input_w = probe.rank() == 4 ? probe.dim(3) : 0;

    Model model = build_model(config, stream);
    {
        std::mt19937 init_rng = make_rng(config.seed, rng_stream::kWeightInit);
        init_weights(model, init_rng);
    }
    WeightMask mask = init_mask(model, config.sparsity, config.seed);
    zero_masked_weights(model, mask);

    TdmSchedule schedule{config.delta_k, config.p_intra, config.p_inter, config.sparsity};
    if (config.tdm_on()) validate(schedule);

    std::mt19937 shuffle_rng = make_rng(config.seed, rng_stream::kShuffle);
    std::mt19937 reservoir_rng = make_rng(config.seed, rng_stream::kReservoir);
    std::mt19937 grow_rng = make_rng(config.seed, rng_stream::kMaskGrow);
    std::mt19937 score_rng = make_rng(config.seed, rng_stream::kScoreSample);
    std::mt19937 replay_rng = make_rng(config.seed, rng_stream::kReplaySample);

    RehearsalBuffer buffer(config.uses_buffer() ? config.buffer_capacity : 0);
    GradientMask gmask;
    long gmask_generation = 0;

    RunReport report;
    report.config = config;
    long step = 0;
    const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);

    for (std::size_t ti = 0; ti < stream.tasks.size(); ++ti) {
        const int task_no = static_cast<int>(ti) + 1;
        const Task& task = stream.tasks[ti];

        std::unordered_map<ExampleId, std::size_t> row_of;
        row_of.reserve(task.train.size());
        for (std::size_t i = 0; i < task.train.size(); ++i) row_of[task.train.ids[i]] = i;

        std::vector<ExampleId> active = task.train.ids;
        RemovalPolicy policy{config.rho, config.cutoff, task.train.size()};
        if (config.ddr_on()) validate(policy);
        MisclassCounter counter;

        // deterministic sample of the active set for importance scoring:
        // min(10, available) mini-batches plus one pass over the buffer
        auto make_score_batches = [&]() {
            std::vector<ScoreBatch> batches;
            if (active.empty()) return batches;
            std::vector<ExampleId> pool = active;
            std::size_t want = std::min(pool.size(), 10 * batch_size);
            for (std::size_t i = 0; i < want; ++i) {
                std::uniform_int_distribution<std::size_t> d(i, pool.size() - 1);
                std::swap(pool[i], pool[d(score_rng)]);
            }
            for (std::size_t start = 0; start < want; start += batch_size) {
                std::size_t count = std::min(batch_size, want - start);
                std::vector<std::size_t> rows(count);
                ScoreBatch sb;
                sb.labels.resize(count);
                for (std::size_t i = 0; i < count; ++i) {
                    std::size_t row = row_of.at(pool[start + i]);
                    rows[i] = row;
                    sb.labels[i] = task.train.labels[row];
                }
                sb.inputs = gather_rows(task.train.inputs, rows);
                batches.push_back(std::move(sb));
            }
            return batches;
        };

        auto rebuild_gmask = [&]() {
            auto batches = make_score_batches();
            CgiScores cgi = compute_cgi(model, batches, task.classes, &buffer, config.alpha,
                                        config.beta, batch_size);
            gmask = build_gradient_mask(mask, cgi, config.gradient_extra_sparsity);
            ++gmask_generation;
        };

        for (int epoch = 1; epoch <= config.epochs_per_task; ++epoch) {
            TdmEventLog event;
            long gen_at_epoch_start = gmask_generation;
            if (config.tdm_on()) {
                auto score_fn = [&]() {
                    return compute_cwi(model, make_score_batches(), task.classes, &buffer,
                                       config.alpha, config.beta, batch_size);
                };
                event = tdm_step(task_no, epoch, mask, model, schedule, score_fn, grow_rng);
                report.events.inter_expand += event.did_expand ? 1 : 0;
                report.events.inter_shrink += event.did_shrink ? 1 : 0;
                report.events.intra += event.did_intra ? 1 : 0;
                if (event.changed_mask() && config.dgm_on()) rebuild_gmask();
            }
            if (config.dgm_on() && epoch == 1 && gmask_generation == gen_at_epoch_start) {
                rebuild_gmask();
            }

            std::shuffle(active.begin(), active.end(), shuffle_rng);
            for (std::size_t start = 0; start < active.size(); start += batch_size) {
                std::size_t count = std::min(batch_size, active.size() - start);
                std::vector<std::size_t> rows(count);
                std::vector<int> labels(count);
                std::vector<ExampleId> ids(count);
                for (std::size_t i = 0; i < count; ++i) {
                    ids[i] = active[start + i];
                    rows[i] = row_of.at(ids[i]);
                    labels[i] = task.train.labels[rows[i]];
                }
                Tensor inputs = gather_rows(task.train.inputs, rows);

                ReplayLossResult loss;
                std::vector<std::size_t> replay_sizes;
                switch (config.method) {
                    case Method::sgd:
                        loss = plain_loss(model, inputs, labels, task.classes);
                        break;
                    case Method::er:
                    case Method::sparcl_er: {
                        std::vector<const BufferEntry*> replay;
                        if (!buffer.empty()) {
                            replay = sample_batch(buffer, batch_size, replay_rng);
                            replay_sizes.push_back(replay.size());
                        }
                        loss = er_loss(model, inputs, labels, replay, task.classes);
                        break;
                    }
                    case Method::derpp:
                    case Method::sparcl_derpp: {
                        std::vector<const BufferEntry*> replay_a, replay_b;
                        if (!buffer.empty() && config.coeff_mse > 0.0) {
                            replay_a = sample_batch(buffer, batch_size, replay_rng);
                            replay_sizes.push_back(replay_a.size());
                        }
                        if (!buffer.empty() && config.coeff_ce > 0.0) {
                            replay_b = sample_batch(buffer, batch_size, replay_rng);
                            replay_sizes.push_back(replay_b.size());
                        }
                        loss = derpp_loss(model, inputs, labels, replay_a, replay_b,
                                          config.coeff_mse, config.coeff_ce, task.classes);
                        break;
                    }
                }

                if (config.dgm_on()) apply_gradient_mask(loss.grads, gmask);
                sgd_step(model, loss.grads, config.lr, &mask);

                // training-pass predictions, single-head over the task's classes
                std::vector<int> preds(count);
                for (std::size_t i = 0; i < count; ++i) {
                    int best = task.classes.begin;
                    float best_v = loss.current_logits.at(i, static_cast<std::size_t>(best));
                    for (int c = task.classes.begin + 1; c < task.classes.end; ++c) {
                        float v = loss.current_logits.at(i, static_cast<std::size_t>(c));
                        if (v > best_v) {
                            best_v = v;
                            best = c;
                        }
                    }
                    preds[i] = best;
                }
                record_misclassifications(counter, preds, labels, ids);

                if (buffer.capacity() > 0) {
                    for (std::size_t i = 0; i < count; ++i) {
                        BufferEntry entry;
                        entry.input = slice_row(inputs, i);
                        entry.label = labels[i];
                        entry.stored_logits = slice_row(loss.current_logits, i);
                        entry.task_id = static_cast<int>(ti);
                        entry.insertion_id = ids[i];
                        reservoir_insert(buffer, std::move(entry), reservoir_rng);
                    }
                }

                accumulate_training_flops(report.flops, model, &mask,
                                          config.dgm_on() ? &gmask : nullptr,
                                          static_cast<int>(count), config.dgm_on(), input_h,
                                          input_w);
                for (std::size_t n : replay_sizes) {
                    accumulate_training_flops(report.flops, model, &mask,
                                              config.dgm_on() ? &gmask : nullptr,
                                              static_cast<int>(n), config.dgm_on(), input_h,
                                              input_w);
                }

                ++step;
                if (hooks && hooks->after_step) {
                    StepContext ctx{model,   mask, config.dgm_on() ? &gmask : nullptr,
                                    task_no, epoch, step, gmask_generation};
                    hooks->after_step(ctx);
                }
            }

            if (epoch % config.delta_k == 0) {
                int stage = epoch / config.delta_k;
                if (config.ddr_on()) {
                    std::size_t quota = removal_quota(policy, stage);
                    remove_easiest(active, counter, quota);
                    report.removal_log.push_back({task_no, stage, quota, active.size()});
                }
                counter.reset();
                if (config.dgm_on()) rebuild_gmask();
            }

            report.stage_log.push_back(
                {task_no, epoch, sparsity(mask), event.removed, event.grown,
                 config.dgm_on() ? sparsity(gmask) : sparsity(mask)});
        }
    }

    report.class_il = evaluate(model, stream, EvalMode::class_il);
    report.task_il = evaluate(model, stream, EvalMode::task_il);
    report.memory = make_memory_report(model, config.batch_size, config.sparsity,
                                       config.dgm_on() ? config.gradient_extra_sparsity : 0.0, 4,
                                       input_h, input_w);
    for (const BufferEntry& e : buffer.entries()) {
        report.buffer_dump.push_back({e.task_id, e.label, e.insertion_id});
    }
    report.model = std::move(model);
    report.mask = std::move(mask);
    return report;
}

using nlohmann::json;

json config_to_json(const TrainConfig& c) {
    return json{{"method", method_name(c.method)},
                {"sparsity", c.sparsity},
                {"gradient_extra_sparsity", c.gradient_extra_sparsity},
                {"rho", c.rho},
                {"cutoff", c.cutoff},
                {"delta_k", c.delta_k},
                {"p_intra", c.p_intra},
                {"p_inter", c.p_inter},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"coeff_mse", c.coeff_mse},
                {"coeff_ce", c.coeff_ce},
                {"epochs_per_task", c.epochs_per_task},
                {"batch_size", c.batch_size},
                {"buffer_capacity", c.buffer_capacity},
                {"lr", c.lr},
                {"seed", c.seed},
                {"arch", c.arch},
                {"hidden", c.hidden},
                {"precision", c.precision}};
}

json report_to_json(const RunReport& r, const std::string& timestamp) {
    json j;
    j["schema"] = "sparcl-run-report/1";
    j["generated_at"] = timestamp;
    j["seed"] = r.config.seed;
    j["config"] = config_to_json(r.config);
    j["class_il_avg"] = r.class_il.average;
    j["task_il_avg"] = r.task_il.average;
    j["per_task"] = json{{"class_il", r.class_il.per_task}, {"task_il", r.task_il.per_task}};
    j["train_flops_forward"] = r.flops.forward;
    j["train_flops_backward"] = r.flops.backward;
    j["train_flops_total"] = r.flops.total();
    j["memory_footprint_bytes"] = r.memory.footprint_bytes;
    j["memory"] = json{{"batch_size", r.memory.batch_size},
                       {"activation_count", r.memory.activation_count},
                       {"weight_count", r.memory.weight_count},
                       {"weight_sparsity", r.memory.weight_sparsity},
                       {"gradient_extra_sparsity", r.memory.gradient_extra_sparsity},
                       {"bytes_per_value", r.memory.bytes_per_value}};
    j["events"] = json{{"inter_expand", r.events.inter_expand},
                       {"inter_shrink", r.events.inter_shrink},
                       {"intra", r.events.intra}};
    j["final_sparsity"] = sparsity(r.mask);
    return j;
}

namespace {

std::string iso_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

}  // namespace

void emit_report(const RunReport& report, const std::string& out_dir, bool dump_buffer) {
    std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir);

    write_file(dir / "report.json", report_to_json(report, iso_timestamp()).dump(2) + "\n");

    std::string stages = "task,epoch,sparsity,removed_count,grown_count,gradient_sparsity\n";
    for (const StageRow& s : report.stage_log) {
        char line[160];
        std::snprintf(line, sizeof line, "%d,%d,%.6f,%zu,%zu,%.6f\n", s.task, s.epoch, s.sparsity,
                      s.removed, s.grown, s.gradient_sparsity);
        stages += line;
    }
    write_file(dir / "stages.csv", stages);

    std::string removal = "task,stage,quota,remaining_count\n";
    for (const RemovalRow& r : report.removal_log) {
        char line[96];
        std::snprintf(line, sizeof line, "%d,%d,%zu,%zu\n", r.task, r.stage, r.quota, r.remaining);
        removal += line;
    }
    write_file(dir / "removal.csv", removal);

    save_model(report.model, (dir / "checkpoint.json").string());
    write_file(dir / "csr.json", csr_export_to_json(report.model, report.mask).dump(2) + "\n");

    if (dump_buffer) {
        std::string lines;
        for (const BufferDumpRow& row : report.buffer_dump) {
            lines += json{{"task_id", row.task_id},
                          {"label", row.label},
                          {"insertion_id", row.insertion_id}}
                         .dump() +
                     "\n";
        }
        write_file(dir / "buffer.jsonl", lines);
    }
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
    try {
        if (key == "method") c.method = parse_method(value);
        else if (key == "sparsity") c.sparsity = std::stod(value);
        else if (key == "gradient_extra_sparsity") c.gradient_extra_sparsity = std::stod(value);
        else if (key == "rho") c.rho = std::stod(value);
        else if (key == "cutoff") c.cutoff = std::stoi(value);
        else if (key == "delta_k") c.delta_k = std::stoi(value);
        else if (key == "p_intra") c.p_intra = std::stod(value);
        else if (key == "p_inter") c.p_inter = std::stod(value);
        else if (key == "alpha") c.alpha = std::stod(value);
        else if (key == "beta") c.beta = std::stod(value);
        else if (key == "coeff_mse") c.coeff_mse = std::stod(value);
        else if (key == "coeff_ce") c.coeff_ce = std::stod(value);
        else if (key == "epochs_per_task") c.epochs_per_task = std::stoi(value);
        else if (key == "batch_size") c.batch_size = std::stoi(value);
        else if (key == "buffer_capacity") c.buffer_capacity = static_cast<std::size_t>(std::stoul(value));
        else if (key == "lr") c.lr = std::stod(value);
        else if (key == "seed") c.seed = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "arch") c.arch = value;
        else if (key == "hidden") c.hidden = std::stoi(value);
        else if (key == "precision") c.precision = value;
        else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("bad value '" + value + "' for config key '" + key + "'");
    }
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    TrainConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        apply_config_entry(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

}  // namespace sparcl
