//! Translation-strategy prompt templates.
//!
//! Template bodies live in `templates/*.txt` next to a `manifest.toml` that
//! fixes ids, theory tags and the declared placeholder set. The builtin
//! library embeds that directory at compile time; [`PromptLibrary::load`]
//! reads an edited copy from disk instead.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown template {id:?}; valid ids: {}", valid.join(", "))]
    UnknownTemplate { id: String, valid: Vec<String> },
    #[error("missing placeholder {0:?}")]
    MissingPlaceholder(String),
    #[error("template {template:?}: {message}")]
    Syntax { template: String, message: String },
    #[error("template {template:?}: manifest declares {declared:?} but body uses {found:?}")]
    PlaceholderMismatch {
        template: String,
        declared: BTreeSet<String>,
        found: BTreeSet<String>,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theory {
    Skopos,
    FunctionalEquivalence,
    TextTypology,
    None,
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Theory::Skopos => "skopos",
            Theory::FunctionalEquivalence => "functional_equivalence",
            Theory::TextTypology => "text_typology",
            Theory::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub theory: Theory,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    /// Parses `body` and checks its placeholders against the declared set.
    pub fn new(
        template_id: impl Into<String>,
        theory: Theory,
        body: impl Into<String>,
        declared: impl IntoIterator<Item = String>,
    ) -> Result<Self, PromptError> {
        let template_id = template_id.into();
        let body = body.into();
        let segments = parse(&template_id, &body)?;
        let found: BTreeSet<String> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.clone()),
                Segment::Text(_) => None,
            })
            .collect();
        let declared: BTreeSet<String> = declared.into_iter().collect();
        if declared != found {
            return Err(PromptError::PlaceholderMismatch {
                template: template_id,
                declared,
                found,
            });
        }
        Ok(Self {
            template_id,
            theory,
            body,
            required_placeholders: found,
            segments,
        })
    }

    pub fn is_strategy(&self) -> bool {
        self.theory != Theory::None
    }

    /// Substitutes every placeholder; extra variables are ignored.
    pub fn render(&self, vars: &HashMap<String, String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => match vars.get(name) {
                    Some(v) => out.push_str(v),
                    None => return Err(PromptError::MissingPlaceholder(name.clone())),
                },
            }
        }
        Ok(out)
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn parse(template: &str, body: &str) -> Result<Vec<Segment>, PromptError> {
    let syntax = |message: String| PromptError::Syntax {
        template: template.to_string(),
        message,
    };
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((at, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|p| p.1) == Some('{') => {
                chars.next();
                text.push('{');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some((_, '}')) => break,
                        Some((_, ch)) if is_name_char(ch) => name.push(ch),
                        _ => return Err(syntax(format!("unterminated or invalid placeholder at byte {at}"))),
                    }
                }
                if name.is_empty() {
                    return Err(syntax(format!("empty placeholder at byte {at}")));
                }
                if !text.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut text)));
                }
                segments.push(Segment::Slot(name));
            }
            '}' if chars.peek().map(|p| p.1) == Some('}') => {
                chars.next();
                text.push('}');
            }
            '}' => return Err(syntax(format!("unmatched '}}' at byte {at}"))),
            other => text.push(other),
        }
    }
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    Ok(segments)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    template: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    file: String,
    theory: Theory,
    placeholders: Vec<String>,
}

const BUILTIN_MANIFEST: &str = include_str!("../templates/manifest.toml");

const BUILTIN_FILES: &[(&str, &str)] = &[
    ("scene_analysis.txt", include_str!("../templates/scene_analysis.txt")),
    ("target_audience.txt", include_str!("../templates/target_audience.txt")),
    ("key_information.txt", include_str!("../templates/key_information.txt")),
    ("intent.txt", include_str!("../templates/intent.txt")),
    ("information_equivalence.txt", include_str!("../templates/information_equivalence.txt")),
    ("cultural_equivalence.txt", include_str!("../templates/cultural_equivalence.txt")),
    ("text_type.txt", include_str!("../templates/text_type.txt")),
    ("analysis_based_translation.txt", include_str!("../templates/analysis_based_translation.txt")),
    ("zero_shot_translation.txt", include_str!("../templates/zero_shot_translation.txt")),
];

/// Read-only template registry in manifest order.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: IndexMap<String, PromptTemplate>,
}

impl PromptLibrary {
    /// The templates shipped in this crate's `templates/` directory.
    pub fn builtin() -> Self {
        Self::from_manifest(BUILTIN_MANIFEST, |file| {
            BUILTIN_FILES
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, body)| body.to_string())
                .ok_or_else(|| PromptError::Manifest(format!("no builtin file {file:?}")))
        })
        .expect("builtin templates are valid")
    }

    /// Loads `manifest.toml` and the files it references from `dir`.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let manifest_path = dir.join("manifest.toml");
        let manifest = std::fs::read_to_string(&manifest_path).map_err(|source| PromptError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
        Self::from_manifest(&manifest, |file| {
            let path = dir.join(file);
            std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        })
    }

    fn from_manifest<F>(manifest: &str, mut read: F) -> Result<Self, PromptError>
    where
        F: FnMut(&str) -> Result<String, PromptError>,
    {
        let manifest: Manifest = toml::from_str(manifest).map_err(|e| PromptError::Manifest(e.to_string()))?;
        let mut templates = IndexMap::new();
        for entry in manifest.template {
            let body = read(&entry.file)?;
            let t = PromptTemplate::new(entry.id.clone(), entry.theory, body, entry.placeholders)?;
            if templates.insert(entry.id.clone(), t).is_some() {
                return Err(PromptError::Manifest(format!("duplicate template id {:?}", entry.id)));
            }
        }
        Ok(Self { templates })
    }

    pub fn get(&self, template_id: &str) -> Option<&PromptTemplate> {
        self.templates.get(template_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    /// Strategy template ids in canonical order (translation instructions excluded).
    pub fn list_strategies(&self) -> Vec<String> {
        self.templates
            .values()
            .filter(|t| t.is_strategy())
            .map(|t| t.template_id.clone())
            .collect()
    }

    pub fn render(&self, template_id: &str, vars: &HashMap<String, String>) -> Result<String, PromptError> {
        let template = self.get(template_id).ok_or_else(|| PromptError::UnknownTemplate {
            id: template_id.to_string(),
            valid: self.templates.keys().cloned().collect(),
        })?;
        template.render(vars)
    }
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}
