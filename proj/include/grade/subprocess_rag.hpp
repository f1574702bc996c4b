#pragma once

#include <cstdio>
#include <mutex>
#include <string>
#include <sys/types.h>

#include "grade/evalharness.hpp"

namespace grade {

/// Runs an external RAG system as a child process speaking line-delimited
/// JSON: one {"qa_id", "question", "context"} request per line on stdin,
/// one {"qa_id", "answer"} response per line on stdout. Requests are
/// serialized; the child sees them one at a time.
class SubprocessRag : public RagSystem {
public:
    /// `command` runs under /bin/sh -c.
    explicit SubprocessRag(std::string command, std::string model_id = "subprocess");
    ~SubprocessRag() override;
    SubprocessRag(const SubprocessRag&) = delete;
    SubprocessRag& operator=(const SubprocessRag&) = delete;

    std::string answer(const std::string& qa_id, const std::string& question,
                       const std::vector<std::string>& context) override;
    std::string id() const override { return model_id_; }

private:
    void close_child();

    std::string command_;
    std::string model_id_;
    std::mutex mutex_;
    pid_t pid_ = -1;
    std::FILE* to_child_ = nullptr;
    std::FILE* from_child_ = nullptr;
};

}  // namespace grade
