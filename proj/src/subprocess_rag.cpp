#include "grade/subprocess_rag.hpp"

#include <csignal>
#include <cstdlib>
#include <sys/wait.h>
#include <unistd.h>

namespace grade {

SubprocessRag::SubprocessRag(std::string command, std::string model_id)
    : command_(std::move(command)), model_id_(std::move(model_id)) {
    int in_pipe[2];   // parent -> child
    int out_pipe[2];  // child -> parent
    if (pipe(in_pipe) != 0) throw TransportError("subprocess: pipe failed");
    if (pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw TransportError("subprocess: pipe failed");
    }
    pid_ = fork();
    if (pid_ < 0) throw TransportError("subprocess: fork failed");
    if (pid_ == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = fdopen(in_pipe[1], "w");
    from_child_ = fdopen(out_pipe[0], "r");
    if (!to_child_ || !from_child_) {
        close_child();
        throw TransportError("subprocess: fdopen failed");
    }
    // A child that exits early must not kill us with SIGPIPE on write.
    std::signal(SIGPIPE, SIG_IGN);
}

SubprocessRag::~SubprocessRag() { close_child(); }

void SubprocessRag::close_child() {
    if (to_child_) {
        std::fclose(to_child_);
        to_child_ = nullptr;
    }
    if (from_child_) {
        std::fclose(from_child_);
        from_child_ = nullptr;
    }
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

std::string SubprocessRag::answer(const std::string& qa_id, const std::string& question,
                                  const std::vector<std::string>& context) {
    std::lock_guard lock(mutex_);
    if (!to_child_ || !from_child_) throw TransportError("subprocess: not running");
    const auto request = json{{"qa_id", qa_id}, {"question", question}, {"context", context}}.dump() + "\n";
    if (std::fwrite(request.data(), 1, request.size(), to_child_) != request.size() || std::fflush(to_child_) != 0)
        throw TransportError("subprocess: write failed (child exited?)");

    char* line = nullptr;
    std::size_t cap = 0;
    const auto n = getline(&line, &cap, from_child_);
    std::string response = n > 0 ? std::string(line, static_cast<std::size_t>(n)) : std::string{};
    std::free(line);
    if (n <= 0) throw TransportError("subprocess: no response for " + qa_id);
    try {
        auto j = json::parse(response);
        const auto got = j.at("qa_id").get<std::string>();
        if (got != qa_id) throw TransportError("subprocess: response for " + got + " while waiting for " + qa_id);
        return j.at("answer").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError("subprocess: malformed response: " + std::string(e.what()));
    }
}

}  // namespace grade
