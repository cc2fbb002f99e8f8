const JUDGEMENT_TEMPLATE: &str =
    "Analyze the case proceeding and predict whether the appeal/petition will be accepted (1) or rejected (0).\n\
Subsequently provide an explanation behind this prediction with important textual evidence from the case.\n\
### Input: case_proceeding: <case_pro>\n\
### Response: ";

const SUMMARIZATION_TEMPLATE: &str = "You are a legal assistant and your job is to summarize the underneath case proceeding given in a most concise manner while being safe.\n\
Your summary must have the same meaning and not include false information. Make sure you do not use any external knowledge other than what is provided to you.\n\
Your final output must only be the summarized text.\n\
### Case: <case>\n\
### Summary: ";

/// Zero-shot judgement-prediction prompt for `case_text`.
pub fn judgement_prompt(case_text: &str) -> String {
    JUDGEMENT_TEMPLATE.replacen("<case_pro>", case_text, 1)
}

/// Zero-shot summarization prompt for `case_text`.
pub fn summarization_prompt(case_text: &str) -> String {
    SUMMARIZATION_TEMPLATE.replacen("<case>", case_text, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judgement_shape() {
        let p = judgement_prompt("The appellant <case> was");
        assert!(p.ends_with("### Response: "));
        assert!(p.contains("### Input: case_proceeding: The appellant <case> was\n"));
        assert!(p.starts_with("Analyze the case proceeding and predict whether the appeal/petition will be accepted (1) or rejected (0).\nSubsequently"));
    }

    #[test]
    fn summarization_shape() {
        let p = summarization_prompt("Facts <case_pro> here");
        assert!(p.contains("Your final output must only be the summarized text."));
        assert!(p.contains("\n### Case: Facts <case_pro> here\n### Summary: "));
        assert!(p.ends_with("### Summary: "));
        assert_eq!(p.lines().count(), 5);
    }
}
