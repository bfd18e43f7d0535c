//! Prompt templates for the sketch pipeline.
//!
//! The extraction and refinement texts are the pipeline's defaults; each can
//! be overridden by dropping `identity.txt`, `extract.txt`, or `refine.txt`
//! into a template directory. The refinement template interpolates
//! `{current_params}`, `{x_axis_min}` and `{x_axis_max}`.

use std::path::Path;

pub const IDENTITY_PROMPT: &str = "\
Read the attribute identifier written in this sketch (SA, OA or EA plus an index) \
and the number of attribute values, from the drawing itself. Also read the horizontal \
axis range. Reply with a JSON object: \
{\"type\": \"SA\"|\"OA\"|\"EA\", \"index\": <positive integer>, \
\"values\": <number of attribute values>, \"x_axis_min\": <number>, \"x_axis_max\": <number>}. \
If no identifier is legible, reply {\"type\": null}.";

pub const EXTRACT_PROMPT: &str = "\
Analyze this image. Determine if it is a Normal, Poisson, or Uniform distribution.
- For Normal: Identify peak (mu), width (sigma).
- For Poisson: Identify rate (lambda).
- For Uniform: Identify range (low, high).";

pub const REFINE_PROMPT: &str = "\
Refine the parameters. Left is Original, Right is Approximation.
Current Parameters: {current_params}

CRITICAL INSTRUCTION:
Look at the edges of the curve (at {x_axis_min} and {x_axis_max}).
- If the Original sketch is still high at the edges, but your Approximation has dropped to zero, you MUST INCREASE SIGMA.
- Do not sacrifice the width of the base just to make the peak sharper.
- It is better to have a wider curve that covers the edges than a narrow one that fits the peak perfectly.

Output the CORRECTED object.";

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub identity: String,
    pub extract: String,
    pub refine: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            identity: IDENTITY_PROMPT.to_string(),
            extract: EXTRACT_PROMPT.to_string(),
            refine: REFINE_PROMPT.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Defaults with any of `identity.txt`, `extract.txt`, `refine.txt` in
    /// `dir` substituted.
    pub fn load_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut templates = PromptTemplates::default();
        for (name, slot) in [
            ("identity.txt", &mut templates.identity),
            ("extract.txt", &mut templates.extract),
            ("refine.txt", &mut templates.refine),
        ] {
            let path = dir.join(name);
            if path.is_file() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(templates)
    }

    pub fn render_refine(&self, current_params: &str, x_axis_min: f64, x_axis_max: f64) -> String {
        self.refine
            .replace("{current_params}", current_params)
            .replace("{x_axis_min}", &format_axis(x_axis_min))
            .replace("{x_axis_max}", &format_axis(x_axis_max))
    }
}

fn format_axis(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refine_interpolation() {
        let templates = PromptTemplates::default();
        let text = templates.render_refine(r#"{"family":"Normal","mu":4,"sigma":1.5}"#, 0.0, 8.0);
        assert!(text.contains(r#"Current Parameters: {"family":"Normal","mu":4,"sigma":1.5}"#));
        assert!(text.contains("edges of the curve (at 0 and 8)"));
        assert!(text.contains("Output the CORRECTED object."));
    }

    #[test]
    fn overrides_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("extract.txt"), "custom extract").unwrap();
        let templates = PromptTemplates::load_overrides(dir.path()).unwrap();
        assert_eq!(templates.extract, "custom extract");
        assert_eq!(templates.identity, IDENTITY_PROMPT);
    }
}
