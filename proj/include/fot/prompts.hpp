#pragma once

#include <map>
#include <string>

namespace fot {

/// Substitutes {{name}} placeholders. Unknown placeholders are left intact
/// so a missing value is visible in the rendered text.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values);

/// Generation prompts are assembled as preamble ⊕ retrieved exemplar ⊕ body;
/// empty pieces vanish without separators so the unaugmented pipeline stays
/// byte-identical apart from the preamble.
std::string compose_prompt(const std::string& preamble, const std::string& exemplar,
                           const std::string& body);

/// The plain-text prompt assets, loaded from an assets directory:
///   game24/{propose,step2,value}.txt, math/{zero_shot,refine,critic,self_correct}.txt,
///   decision/math_expert.txt
struct PromptPack {
    std::string game24_propose;
    std::string game24_step2;
    std::string game24_value;
    std::string math_zero_shot;
    std::string math_refine;
    std::string math_critic;
    std::string math_self_correct;
    std::string math_expert;

    /// Loads from `dir`; when empty, uses $FOT_PROMPT_DIR, then the
    /// compiled-in default. Throws IngestError on missing files.
    static PromptPack load(const std::string& dir = "");
};

}  // namespace fot
