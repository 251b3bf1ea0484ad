#include "narrowbeam/cloud.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace narrowbeam {

namespace {

constexpr char kMagic[8] = {'N', 'B', 'C', 'L', 'D', '0', '0', '1'};

static_assert(sizeof(double) == 8, "unexpected double size");

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

void put(std::FILE* f, const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw error("cloud io: short write");
}

void get(std::FILE* f, void* p, std::size_t n) {
    if (std::fread(p, 1, n, f) != n) throw error("cloud io: short read");
}

} // namespace

void write_cloud_binary(const WeightedCloud& cloud, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw error("cloud io: cannot open " + path);
    put(f.get(), kMagic, 8);
    const std::uint32_t version = 1, dim = static_cast<std::uint32_t>(cloud.dim);
    put(f.get(), &version, 4);
    put(f.get(), &dim, 4);
    put(f.get(), &cloud.epsilon, 8);
    put(f.get(), &cloud.seed, 8);
    put(f.get(), &cloud.config_hash, 8);
    put(f.get(), &cloud.diag.backscatter_mass, 8);
    put(f.get(), &cloud.diag.truncation_mass, 8);
    put(f.get(), &cloud.diag.deposited_mass, 8);
    put(f.get(), &cloud.diag.absorbed_mass, 8);
    put(f.get(), &cloud.diag.initial_mass, 8);
    const std::uint64_t n = cloud.size();
    put(f.get(), &n, 8);
    for (std::uint64_t i = 0; i < n; ++i) {
        put(f.get(), cloud.pos.data() + i * dim, 8 * dim);
        put(f.get(), cloud.dir.data() + i * dim, 8 * dim);
        put(f.get(), cloud.weight.data() + i, 8);
    }
}

WeightedCloud read_cloud_binary(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw error("cloud io: cannot open " + path);
    char magic[8];
    get(f.get(), magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw error("cloud io: bad magic in " + path);
    std::uint32_t version = 0, dim = 0;
    get(f.get(), &version, 4);
    get(f.get(), &dim, 4);
    if (version != 1) throw error("cloud io: unsupported version");
    if (dim < 2 || dim > 16) throw error("cloud io: bad dimension");
    WeightedCloud c;
    c.dim = static_cast<int>(dim);
    get(f.get(), &c.epsilon, 8);
    get(f.get(), &c.seed, 8);
    get(f.get(), &c.config_hash, 8);
    get(f.get(), &c.diag.backscatter_mass, 8);
    get(f.get(), &c.diag.truncation_mass, 8);
    get(f.get(), &c.diag.deposited_mass, 8);
    get(f.get(), &c.diag.absorbed_mass, 8);
    get(f.get(), &c.diag.initial_mass, 8);
    std::uint64_t n = 0;
    get(f.get(), &n, 8);
    c.pos.resize(n * dim);
    c.dir.resize(n * dim);
    c.weight.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        get(f.get(), c.pos.data() + i * dim, 8 * dim);
        get(f.get(), c.dir.data() + i * dim, 8 * dim);
        get(f.get(), c.weight.data() + i, 8);
    }
    return c;
}

void write_cloud_csv(const WeightedCloud& cloud, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "w"));
    if (!f) throw error("cloud io: cannot open " + path);
    std::fprintf(f.get(), "# dim=%d epsilon=%.17g seed=%llu config_hash=%llu\n", cloud.dim,
                 cloud.epsilon, static_cast<unsigned long long>(cloud.seed),
                 static_cast<unsigned long long>(cloud.config_hash));
    std::fprintf(f.get(),
                 "# backscatter=%.17g truncation=%.17g deposited=%.17g absorbed=%.17g "
                 "initial=%.17g\n",
                 cloud.diag.backscatter_mass, cloud.diag.truncation_mass,
                 cloud.diag.deposited_mass, cloud.diag.absorbed_mass, cloud.diag.initial_mass);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int d = 0; d < cloud.dim; ++d)
            std::fprintf(f.get(), "%.17g,", cloud.pos[i * cloud.dim + d]);
        for (int d = 0; d < cloud.dim; ++d)
            std::fprintf(f.get(), "%.17g,", cloud.dir[i * cloud.dim + d]);
        std::fprintf(f.get(), "%.17g\n", cloud.weight[i]);
    }
}

} // namespace narrowbeam
