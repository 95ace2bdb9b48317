use crate::error::{Error, Result};
use crate::geometry::CameraPose;

pub const MAX_TOKENS: usize = 16;
pub const PAD: u32 = 0;
/// Reserved identifier bound to an exemplar object by personalization.
pub const IDENTIFIER: &str = "[V]";

/// Fixed vocabulary. Index 0 is padding.
pub const VOCABULARY: &[&str] = &[
    "<pad>", "a", "photo", "of", "object", IDENTIFIER,
    "front", "side", "back", "overhead",
    "red", "orange", "yellow", "green", "blue", "purple", "white", "black", "gray", "brown",
    "checker", "stripes", "dots", "gradient", "patches",
    "sphere", "cube", "torus", "capsule",
];

pub fn vocab_size() -> usize {
    VOCABULARY.len()
}

pub fn token_id(word: &str) -> Option<u32> {
    VOCABULARY.iter().position(|w| *w == word).map(|i| i as u32)
}

/// At most [`MAX_TOKENS`] valid ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PromptTokens {
    pub ids: Vec<u32>,
}

impl PromptTokens {
    pub fn new(ids: Vec<u32>) -> Result<PromptTokens> {
        if ids.len() > MAX_TOKENS {
            return Err(Error::InvalidArgument(format!("prompt longer than {MAX_TOKENS} tokens")));
        }
        if let Some(bad) = ids.iter().find(|&&i| i as usize >= VOCABULARY.len()) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside the vocabulary")));
        }
        Ok(PromptTokens { ids })
    }

    /// Whitespace-separated words, each of which must be in the vocabulary.
    pub fn parse(text: &str) -> Result<PromptTokens> {
        let ids = text
            .split_whitespace()
            .map(|w| {
                token_id(&w.to_lowercase().replace("[v]", IDENTIFIER))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown prompt word {w:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        PromptTokens::new(ids)
    }

    /// The all-padding sequence used as the unconditional prompt.
    pub fn null() -> PromptTokens {
        PromptTokens { ids: vec![PAD; 1] }
    }

    pub fn is_null(&self) -> bool {
        self.ids.iter().all(|&i| i == PAD)
    }

    pub fn contains(&self, word: &str) -> bool {
        token_id(word).is_some_and(|id| self.ids.contains(&id))
    }

    pub fn text(&self) -> String {
        self.ids
            .iter()
            .filter(|&&i| i != PAD)
            .map(|&i| VOCABULARY[i as usize])
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Append a word (replacing any existing view token when `word` is one).
    pub fn with_word(&self, word: &str) -> Result<PromptTokens> {
        let id = token_id(word).ok_or_else(|| Error::InvalidArgument(format!("unknown word {word:?}")))?;
        let views: Vec<u32> = VIEW_WORDS.iter().filter_map(|w| token_id(w)).collect();
        let mut ids: Vec<u32> = if views.contains(&id) {
            self.ids.iter().copied().filter(|i| !views.contains(i)).collect()
        } else {
            self.ids.clone()
        };
        ids.push(id);
        PromptTokens::new(ids)
    }
}

pub const VIEW_WORDS: [&str; 4] = ["front", "side", "back", "overhead"];

/// View word by azimuth quadrant (front within ±45° of +z, back opposite,
/// side otherwise); elevation above 60° reads as overhead.
pub fn view_word(azimuth_deg: f64, elevation_deg: f64) -> &'static str {
    if elevation_deg > 60.0 {
        return "overhead";
    }
    let a = azimuth_deg.rem_euclid(360.0);
    if !(45.0..315.0).contains(&a) {
        "front"
    } else if (135.0..225.0).contains(&a) {
        "back"
    } else {
        "side"
    }
}

pub fn view_word_for(cam: &CameraPose) -> &'static str {
    view_word(cam.azimuth.to_degrees(), cam.elevation.to_degrees())
}

/// "a photo of [V] object <view>".
pub fn personalized_prompt(view: Option<&str>) -> PromptTokens {
    let mut text = format!("a photo of {IDENTIFIER} object");
    if let Some(v) = view {
        text.push(' ');
        text.push_str(v);
    }
    PromptTokens::parse(&text).expect("personalized prompt words are in the vocabulary")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_views() {
        let p = PromptTokens::parse("a photo of [V] object").unwrap();
        assert!(p.contains(IDENTIFIER));
        assert_eq!(p.text(), "a photo of [V] object");
        assert!(PromptTokens::parse("a photo of a zebra").is_err());
        assert_eq!(view_word(0.0, 10.0), "front");
        assert_eq!(view_word(90.0, 10.0), "side");
        assert_eq!(view_word(180.0, 10.0), "back");
        assert_eq!(view_word(-100.0, 10.0), "side");
        assert_eq!(view_word(180.0, 70.0), "overhead");
        let q = p.with_word("front").unwrap().with_word("back").unwrap();
        assert_eq!(q.text(), "a photo of [V] object back");
        assert!(PromptTokens::new(vec![0; 17]).is_err());
    }
}
