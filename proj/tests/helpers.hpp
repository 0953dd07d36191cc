#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

namespace testutil {

namespace fs = std::filesystem;

/// Unique scratch directory removed on scope exit.
class TempDir {
  public:
    explicit TempDir(const std::string& tag = "scratch") {
        static std::atomic<int> counter{0};
        p_ = fs::temp_directory_path() /
             ("iglide-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter.fetch_add(1)));
        fs::remove_all(p_);
        fs::create_directories(p_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(p_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return p_; }
    fs::path file(const std::string& name) const { return p_ / name; }

  private:
    fs::path p_;
};

inline void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil
