#include "fot/prompts.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fot/types.hpp"

#ifndef FOT_DEFAULT_PROMPT_DIR
#define FOT_DEFAULT_PROMPT_DIR ""
#endif

namespace fot {

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        std::size_t open = tmpl.find("{{", pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        std::size_t close = tmpl.find("}}", open + 2);
        if (close == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        std::string key = tmpl.substr(open + 2, close - open - 2);
        auto it = values.find(key);
        if (it != values.end()) {
            out += it->second;
        } else {
            out.append(tmpl, open, close + 2 - open);
        }
        pos = close + 2;
    }
    return out;
}

std::string compose_prompt(const std::string& preamble, const std::string& exemplar,
                           const std::string& body) {
    std::string out;
    if (!preamble.empty()) {
        out += preamble;
        out += "\n\n";
    }
    if (!exemplar.empty()) {
        out += exemplar;
        out += "\n\n";
    }
    out += body;
    return out;
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestError("prompt asset not found: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string resolve_dir(const std::string& dir) {
    if (!dir.empty()) return dir;
    if (const char* env = std::getenv("FOT_PROMPT_DIR"); env && *env) return env;
    std::string fallback = FOT_DEFAULT_PROMPT_DIR;
    if (fallback.empty()) {
        throw ConfigError("no prompt directory given and FOT_PROMPT_DIR is unset");
    }
    return fallback;
}

}  // namespace

PromptPack PromptPack::load(const std::string& dir) {
    std::string root = resolve_dir(dir);
    PromptPack p;
    p.game24_propose = read_file(root + "/game24/propose.txt");
    p.game24_step2 = read_file(root + "/game24/step2.txt");
    p.game24_value = read_file(root + "/game24/value.txt");
    p.math_zero_shot = read_file(root + "/math/zero_shot.txt");
    p.math_refine = read_file(root + "/math/refine.txt");
    p.math_critic = read_file(root + "/math/critic.txt");
    p.math_self_correct = read_file(root + "/math/self_correct.txt");
    p.math_expert = read_file(root + "/decision/math_expert.txt");
    return p;
}

}  // namespace fot
