#include "mtabgen/tensor.hpp"

#include <cstdlib>
#include <sstream>
#include <thread>

namespace mtabgen {

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("TABDIFF_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return v;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

void matmul_acc(const double* a, const double* b, double* c, size_t r, size_t n, size_t m) {
    for (size_t i = 0; i < r; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * m;
        for (size_t k = 0; k < n; ++k) {
            const double av = arow[k];
            const double* brow = b + k * m;
            for (size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_bt_acc(const double* a, const double* b, double* c, size_t r, size_t n, size_t m) {
    for (size_t i = 0; i < r; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * m;
        for (size_t j = 0; j < m; ++j) {
            const double* brow = b + j * n;
            double acc = 0.0;
            for (size_t k = 0; k < n; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

void matmul_at_acc(const double* a, const double* b, double* c, size_t r, size_t n, size_t m) {
    for (size_t i = 0; i < r; ++i) {
        const double* arow = a + i * n;
        const double* brow = b + i * m;
        for (size_t k = 0; k < n; ++k) {
            const double av = arow[k];
            double* crow = c + k * m;
            for (size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace mtabgen
