// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string_view>

// Prompt templates. Placeholders in braces are filled with text::render.

namespace medloop::prompts
{

/// Numbered headings every data profile must contain, in order.
inline constexpr std::array<std::string_view, 7> data_report_headers {
    "1. Data Modality and Scale",
    "2. Basic Information",
    "3. Target Distribution",
    "4. Data Quality",
    "5. Feature-Target Relationship and Performance Clues",
    "6. Data Storage Structure and Loading Method",
    "7. In-depth analysis results (optional)",
};

inline constexpr std::string_view feedback_title = "# Training Feedback Report";
inline constexpr std::array<std::string_view, 3> feedback_headers {
    "## I. Results Review",
    "## II. Problems Found",
    "## III. Improvement Suggestions",
};

/// Heading a reviewer uses for its critique; it must not leak into a refined plan.
inline constexpr std::string_view review_header = "Evaluation and Questions";

inline constexpr std::array<std::string_view, 3> report_sections {
    "Data Analysis",
    "Model Training",
    "Uncertainty Analysis",
};

extern const char* const data_system;
extern const char* const data_step;
extern const char* const data_final;
extern const char* const data_reformat;

extern const char* const planner_system;
extern const char* const planner_draft;
extern const char* const reviewer_system;
extern const char* const reviewer_review;
extern const char* const planner_refine;
extern const char* const plan_reformat;

extern const char* const coding_system;
extern const char* const coding_step1;
extern const char* const coding_step;
extern const char* const coding_debug;
extern const char* const coding_reformat;

extern const char* const feedback_system;
extern const char* const feedback_step;
extern const char* const feedback_final;
extern const char* const feedback_reformat;
extern const char* const feedback_step_reformat;

extern const char* const meta_system;
extern const char* const meta_decide;

extern const char* const report_system;
extern const char* const report_section;
extern const char* const report_assemble;
extern const char* const report_visual;
extern const char* const report_fix;
extern const char* const report_reformat;

} // namespace medloop::prompts
