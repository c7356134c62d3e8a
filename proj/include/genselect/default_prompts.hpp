#pragma once

#include <string_view>

// Built-in copies of the templates shipped in prompts/. Keep them in sync;
// tests compare the two byte for byte.

namespace genselect::default_prompts {

inline constexpr std::string_view kGeneration = R"PROMPT(Solve the following math problem. Make sure to put the final answer (and only the final answer) inside \boxed{{}}.

{problem}
)PROMPT";

inline constexpr std::string_view kSummary = R"PROMPT(I will give you a math problem and a detailed solution to it. The solution may be long and may contain exploration, backtracking and self-verification.

Rewrite the solution as a concise, faithful summary. Keep every key step of the argument, note any mistakes that were made and whether they were corrected, and keep the verification steps that were performed. Do not add new reasoning and do not change the final answer. Finish the summary with the final answer inside \boxed{{}}.

Problem:
{problem}

Solution:
{solution}
)PROMPT";

inline constexpr std::string_view kGenrm = R"PROMPT(You will be given a math problem and a proposed solution. Your task is to decide whether the solution is correct.

Problem:
{problem}

Proposed solution:
{solution}

Check each step of the proposed solution, re-derive the key intermediate results yourself, and decide whether the final answer in \boxed{{}} is correct.

End your response with exactly one line of the form
Judgment: Yes
if the final answer is correct, or
Judgment: No
if it is not.
)PROMPT";

inline constexpr std::string_view kGenselect = R"PROMPT(You will be given a challenging math problem followed by {num_solutions} candidate solutions, indexed from 0 to {max_index}. Your task is to analyze the solutions and identify the best one.

Problem:
{problem}

Solutions:
{solutions}

Evaluation process:
1. Group the solutions by their final answers and identify the contradictions between different answers.
2. For each distinct answer, check the reasoning that leads to it and eliminate solutions with clear mathematical errors.
3. Among the remaining solutions, prefer the one whose reasoning is precise, complete and robust in all cases.

End your response with exactly one line of the form
Judgment: IDX
where IDX is the index (an integer from 0 to {max_index}) of the best solution.
)PROMPT";

inline constexpr std::string_view kGenselectItem = R"PROMPT(Solution {index}:
{solution}
)PROMPT";

inline constexpr std::string_view kEquivalence = R"PROMPT(Decide whether the two final answers below, given for the same math problem, are mathematically equivalent.

Answer A: {first}
Answer B: {second}

End your response with exactly one line of the form
Judgment: Yes
if the answers are equivalent, or
Judgment: No
if they are not.
)PROMPT";

}  // namespace genselect::default_prompts
