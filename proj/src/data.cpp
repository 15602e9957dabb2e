#include "sparcl/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace sparcl {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32_be(std::ifstream& f, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(path + ": truncated at byte " + std::to_string(offset));
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError(images_path + ": cannot open");
    std::uint32_t magic = read_u32_be(img, images_path, 0);
    if (magic != kImageMagic) {
        throw FormatError(images_path + ": bad image magic at byte 0 (got 0x" +
                          [&] { char buf[16]; std::snprintf(buf, sizeof buf, "%08x", magic); return std::string(buf); }() +
                          ")");
    }
    std::uint32_t n = read_u32_be(img, images_path, 4);
    std::uint32_t h = read_u32_be(img, images_path, 8);
    std::uint32_t w = read_u32_be(img, images_path, 12);
    std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
    if (!img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        std::size_t got = static_cast<std::size_t>(img.gcount());
        throw FormatError(images_path + ": truncated pixel data at byte " +
                          std::to_string(16 + got));
    }

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError(labels_path + ": cannot open");
    std::uint32_t lmagic = read_u32_be(lab, labels_path, 0);
    if (lmagic != kLabelMagic) {
        throw FormatError(labels_path + ": bad label magic at byte 0");
    }
    std::uint32_t ln = read_u32_be(lab, labels_path, 4);
    if (ln != n) {
        throw FormatError(labels_path + ": label count " + std::to_string(ln) +
                          " does not match image count " + std::to_string(n) + " at byte 4");
    }
    std::vector<unsigned char> lraw(ln);
    if (!lab.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lraw.size()))) {
        std::size_t got = static_cast<std::size_t>(lab.gcount());
        throw FormatError(labels_path + ": truncated label data at byte " +
                          std::to_string(8 + got));
    }

    Dataset ds;
    ds.inputs = Tensor({n, 1, h, w});
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ds.inputs[i] = static_cast<float>(raw[i]) / 255.0f;
    }
    ds.labels.assign(lraw.begin(), lraw.end());
    return ds;
}

namespace {

TaskData gather_task_data(const Dataset& src, const std::vector<std::size_t>& indices,
                          ExampleId first_id) {
    TaskData td;
    td.inputs = gather_rows(src.inputs, indices);
    td.labels.reserve(indices.size());
    td.ids.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        td.labels.push_back(src.labels[indices[k]]);
        td.ids.push_back(first_id + static_cast<ExampleId>(k));
    }
    return td;
}

}  // namespace

TaskStream build_split_tasks(const Dataset& train, const Dataset& test, int task_count,
                             int classes_per_task, std::uint32_t seed) {
    if (task_count < 1 || classes_per_task < 1) {
        throw std::invalid_argument("task_count and classes_per_task must be >= 1");
    }
    int needed = task_count * classes_per_task;
    auto max_label = [](const Dataset& d) {
        int m = -1;
        for (int l : d.labels) m = std::max(m, l);
        return m;
    };
    int available = std::max(max_label(train), max_label(test)) + 1;
    if (needed > available) {
        throw std::invalid_argument("stream needs " + std::to_string(needed) +
                                    " classes but the dataset has " + std::to_string(available));
    }
    std::mt19937 rng = make_rng(seed, rng_stream::kData);
    TaskStream stream;
    stream.class_count = needed;
    ExampleId next_id = 0;
    for (int t = 0; t < task_count; ++t) {
        ClassRange range{t * classes_per_task, (t + 1) * classes_per_task};
        auto collect = [&](const Dataset& src) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < src.labels.size(); ++i) {
                if (range.contains(src.labels[i])) idx.push_back(i);
            }
            return idx;
        };
        std::vector<std::size_t> train_idx = collect(train);
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        std::vector<std::size_t> test_idx = collect(test);

        Task task;
        task.classes = range;
        task.train = gather_task_data(train, train_idx, next_id);
        next_id += static_cast<ExampleId>(train_idx.size());
        task.test = gather_task_data(test, test_idx, next_id);
        next_id += static_cast<ExampleId>(test_idx.size());
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

TaskStream build_synthetic_tasks(int task_count, int classes_per_task, std::size_t dim,
                                 std::size_t n_per_class, double separation, std::uint32_t seed) {
    if (separation < 0.0) throw std::invalid_argument("separation must be non-negative");
    if (task_count < 1 || classes_per_task < 1 || dim == 0 || n_per_class == 0) {
        throw std::invalid_argument("synthetic stream dimensions must be positive");
    }
    int classes = task_count * classes_per_task;
    std::mt19937 rng = make_rng(seed, rng_stream::kData);
    std::normal_distribution<double> noise(0.0, 1.0);

    // per-class samples around separation * e_{c mod dim}; classes beyond dim
    // reuse axes at increasing radius so means stay distinct
    std::vector<Tensor> class_samples;
    class_samples.reserve(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        Tensor samples({n_per_class, dim});
        std::size_t axis = static_cast<std::size_t>(c) % dim;
        double radius = separation * (1.0 + static_cast<double>(c / static_cast<int>(dim)));
        for (std::size_t i = 0; i < n_per_class; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                double mean = d == axis ? radius : 0.0;
                samples.at(i, d) = static_cast<float>(mean + noise(rng));
            }
        }
        class_samples.push_back(std::move(samples));
    }

    TaskStream stream;
    stream.class_count = classes;
    ExampleId next_id = 0;
    std::size_t train_n = n_per_class * 4 / 5;
    for (int t = 0; t < task_count; ++t) {
        Task task;
        task.classes = {t * classes_per_task, (t + 1) * classes_per_task};
        std::vector<float> train_buf, test_buf;
        for (int c = task.classes.begin; c < task.classes.end; ++c) {
            const Tensor& s = class_samples[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < n_per_class; ++i) {
                auto& buf = i < train_n ? train_buf : test_buf;
                buf.insert(buf.end(), s.data().begin() + i * dim, s.data().begin() + (i + 1) * dim);
                auto& td = i < train_n ? task.train : task.test;
                td.labels.push_back(c);
            }
        }
        task.train.inputs = Tensor({task.train.labels.size(), dim}, std::move(train_buf));
        task.test.inputs = Tensor({task.test.labels.size(), dim}, std::move(test_buf));
        // interleave ids after shapes are final
        for (std::size_t i = 0; i < task.train.size(); ++i) task.train.ids.push_back(next_id++);
        for (std::size_t i = 0; i < task.test.size(); ++i) task.test.ids.push_back(next_id++);

        // shuffle train examples within the task
        std::vector<std::size_t> order(task.train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        Tensor shuffled = gather_rows(task.train.inputs, order);
        std::vector<int> labels(order.size());
        for (std::size_t k = 0; k < order.size(); ++k) labels[k] = task.train.labels[order[k]];
        task.train.inputs = std::move(shuffled);
        task.train.labels = std::move(labels);

        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

}  // namespace sparcl
