//! Synthetic corpora with planted coreference chains, typed singletons, and
//! idiomatic distractor phrases whose noun groups look like mentions but are
//! not annotated as such.
//!
//! Pronouns are only used when the entity's previous mention is the nearest
//! preceding gender-compatible mention, so every chain is resolvable.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntityType, InfoStatus, Mention, Span};
use crate::error::{CorefError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Probability that a mention slot is filled by a fresh singleton.
    pub singleton_ratio: f64,
    /// Probability that a sentence carries an idiomatic distractor phrase.
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            documents: 20,
            min_sentences: 5,
            max_sentences: 8,
            singleton_ratio: 0.4,
            distractor_rate: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return Err(CorefError::Config(
                "need 1 <= min_sentences <= max_sentences".into(),
            ));
        }
        for (name, p) in [
            ("singleton_ratio", self.singleton_ratio),
            ("distractor_rate", self.distractor_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorefError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Gender {
    Male,
    Female,
    Neuter,
    /// Person nouns such as "the doctor": block both he and she.
    Either,
}

impl Gender {
    fn compatible(self, pronoun: Gender) -> bool {
        self == pronoun || (self == Gender::Either && pronoun != Gender::Neuter)
    }
}

const MALE: [&str; 6] = ["John", "Peter", "David", "Thomas", "James", "Robert"];
const FEMALE: [&str; 6] = ["Mary", "Susan", "Anna", "Laura", "Emma", "Kate"];
const NOUNS: [(&str, EntityType); 20] = [
    ("school", EntityType::Place),
    ("city", EntityType::Place),
    ("river", EntityType::Place),
    ("company", EntityType::Organization),
    ("committee", EntityType::Organization),
    ("dog", EntityType::Animal),
    ("horse", EntityType::Animal),
    ("tree", EntityType::Plant),
    ("flower", EntityType::Plant),
    ("car", EntityType::Object),
    ("book", EntityType::Object),
    ("water", EntityType::Substance),
    ("gold", EntityType::Substance),
    ("meeting", EntityType::Event),
    ("storm", EntityType::Event),
    ("idea", EntityType::Abstract),
    ("plan", EntityType::Abstract),
    ("week", EntityType::Time),
    ("morning", EntityType::Time),
    ("letter", EntityType::Object),
];
const PERSON_NOUNS: [&str; 4] = ["teacher", "doctor", "farmer", "neighbour"];
const VERBS: [&str; 8] = [
    "saw",
    "liked",
    "visited",
    "found",
    "praised",
    "described",
    "remembered",
    "noticed",
];
const IDIOMS: [&[&str]; 6] = [
    &["in", "the", "end"],
    &["by", "the", "way"],
    &["at", "the", "moment"],
    &["on", "the", "whole"],
    &["for", "the", "record"],
    &["in", "the", "meantime"],
];
const GENRES: [&str; 3] = ["news", "fiction", "conversation"];

struct Entity {
    gender: Gender,
    /// Name, or the noun used after "the".
    word: &'static str,
    is_name: bool,
    etype: EntityType,
    mentions: Vec<(Span, InfoStatus)>,
    last_sentence: Option<usize>,
}

struct Builder {
    tokens: Vec<String>,
    /// `(span, gender, entity index)` in textual order.
    history: Vec<(Span, Gender, Option<usize>)>,
    singletons: Vec<(Span, EntityType, InfoStatus)>,
}

impl Builder {
    fn push_words(&mut self, words: &[&str]) -> Span {
        let start = self.tokens.len();
        self.tokens.extend(words.iter().map(|w| w.to_string()));
        Span::new(start, self.tokens.len() - 1)
    }
}

fn pronoun(g: Gender, subject: bool) -> &'static str {
    match (g, subject) {
        (Gender::Male, true) => "he",
        (Gender::Male, false) => "him",
        (Gender::Female, true) => "she",
        (Gender::Female, false) => "her",
        _ => "it",
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

fn generate_document(index: usize, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Document {
    let genre = *GENRES.choose(rng).expect("genres");
    let mut nouns: Vec<(&str, EntityType)> = NOUNS.to_vec();
    nouns.sort_by_key(|_| rng.random::<u32>());
    let mut nouns = nouns.into_iter();
    let mut people: Vec<&str> = PERSON_NOUNS.to_vec();
    people.sort_by_key(|_| rng.random::<u32>());
    let mut people = people.into_iter();

    let mut entities = vec![
        Entity {
            gender: Gender::Male,
            word: MALE.choose(rng).expect("names"),
            is_name: true,
            etype: EntityType::Person,
            mentions: Vec::new(),
            last_sentence: None,
        },
        Entity {
            gender: Gender::Female,
            word: FEMALE.choose(rng).expect("names"),
            is_name: true,
            etype: EntityType::Person,
            mentions: Vec::new(),
            last_sentence: None,
        },
    ];
    for _ in 0..rng.random_range(1..=2) {
        let (word, etype) = nouns.next().expect("enough nouns");
        entities.push(Entity {
            gender: Gender::Neuter,
            word,
            is_name: false,
            etype,
            mentions: Vec::new(),
            last_sentence: None,
        });
    }

    let mut b = Builder {
        tokens: Vec::new(),
        history: Vec::new(),
        singletons: Vec::new(),
    };
    let mut sentences: Vec<Vec<String>> = Vec::new();
    let n_sent = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
    for sent in 0..n_sent {
        let sentence_start = b.tokens.len();
        let mut subject_entity = None;
        for slot in 0..2 {
            let subject = slot == 0;
            if slot == 1 {
                let verb = *VERBS.choose(rng).expect("verbs");
                b.push_words(&[verb]);
            }
            let fresh = if !rng.random_bool(cfg.singleton_ratio) {
                None
            } else if rng.random_bool(0.25) {
                people
                    .next()
                    .map(|w| (w, EntityType::Person, Gender::Either))
            } else {
                nouns.next().map(|(w, t)| (w, t, Gender::Neuter))
            };
            if let Some((word, etype, gender)) = fresh {
                let det = ["a", "the"][rng.random_range(0..2)];
                let det = if subject && b.tokens.len() == sentence_start {
                    capitalize(det)
                } else {
                    det.to_string()
                };
                let span = b.push_words(&[det.as_str(), word]);
                let status = if det.eq_ignore_ascii_case("a") {
                    InfoStatus::New
                } else {
                    InfoStatus::AccessibleInferrable
                };
                b.singletons.push((span, etype, status));
                b.history.push((span, gender, None));
                continue;
            }
            // The object never repeats the subject's entity, which would call
            // for a reflexive.
            let e = loop {
                let e = rng.random_range(0..entities.len());
                if subject_entity != Some(e) {
                    break e;
                }
            };
            if subject {
                subject_entity = Some(e);
            }
            let ent = &entities[e];
            let status = match ent.last_sentence {
                None => InfoStatus::New,
                Some(prev) if sent - prev <= 1 => InfoStatus::GivenActive,
                Some(_) => InfoStatus::GivenInactive,
            };
            let nearest_compatible = b
                .history
                .iter()
                .rev()
                .find(|(_, g, _)| g.compatible(ent.gender))
                .and_then(|(_, _, owner)| *owner);
            let use_pronoun =
                !ent.mentions.is_empty() && nearest_compatible == Some(e) && rng.random_bool(0.6);
            let at_start = subject && b.tokens.len() == sentence_start;
            let words: Vec<String> = if use_pronoun {
                let p = pronoun(ent.gender, subject);
                vec![if at_start {
                    capitalize(p)
                } else {
                    p.to_string()
                }]
            } else if ent.is_name {
                vec![ent.word.to_string()]
            } else {
                vec![
                    if at_start { "The".into() } else { "the".into() },
                    ent.word.to_string(),
                ]
            };
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let span = b.push_words(&refs);
            let gender = ent.gender;
            let ent = &mut entities[e];
            ent.mentions.push((span, status));
            ent.last_sentence = Some(sent);
            b.history.push((span, gender, Some(e)));
        }
        if rng.random_bool(cfg.distractor_rate) {
            let idiom = *IDIOMS.choose(rng).expect("idioms");
            b.push_words(idiom);
        }
        b.push_words(&["."]);
        sentences.push(b.tokens[sentence_start..].to_vec());
    }

    let mut order: Vec<usize> = (0..entities.len())
        .filter(|&e| !entities[e].mentions.is_empty())
        .collect();
    order.sort_by_key(|&e| entities[e].mentions[0].0);
    let mut gold_clusters = Vec::new();
    let mut gold_mentions = Vec::new();
    for e in order {
        let ent = &entities[e];
        let cluster_id = (ent.mentions.len() >= 2).then_some(gold_clusters.len());
        if cluster_id.is_some() {
            gold_clusters.push(ent.mentions.iter().map(|m| m.0).collect());
        }
        for &(span, status) in &ent.mentions {
            gold_mentions.push(Mention {
                span,
                entity_type: Some(ent.etype),
                info_status: Some(status),
                cluster_id,
            });
        }
    }
    for &(span, etype, status) in &b.singletons {
        gold_mentions.push(Mention {
            span,
            entity_type: Some(etype),
            info_status: Some(status),
            cluster_id: None,
        });
    }
    gold_mentions.sort_by_key(|m| m.span);

    let speakers = sentences
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let who = if genre == "conversation" {
                if i % 2 == 0 {
                    "speaker_a"
                } else {
                    "speaker_b"
                }
            } else {
                "-"
            };
            std::iter::repeat_n(who.to_string(), s.len())
        })
        .collect();
    Document {
        doc_key: format!("{genre}/synthetic_{index:04}_0"),
        genre: genre.to_string(),
        sentences,
        speakers,
        gold_clusters,
        gold_mentions,
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<Document>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.documents)
        .map(|i| generate_document(i, cfg, &mut rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_are_valid_and_deterministic() {
        let cfg = SyntheticConfig::default();
        let docs = generate(&cfg).unwrap();
        assert_eq!(docs.len(), 20);
        for d in &docs {
            d.validate().unwrap();
            assert!(d
                .gold_mentions
                .iter()
                .all(|m| m.entity_type.is_some() && m.info_status.is_some()));
        }
        assert_eq!(docs, generate(&cfg).unwrap());
    }

    #[test]
    fn singleton_share_is_substantial() {
        let docs = generate(&SyntheticConfig {
            documents: 50,
            ..Default::default()
        })
        .unwrap();
        let total: usize = docs.iter().map(|d| d.gold_mentions.len()).sum();
        let singles: usize = docs
            .iter()
            .map(|d| {
                d.gold_mentions
                    .iter()
                    .filter(|m| m.cluster_id.is_none())
                    .count()
            })
            .sum();
        let share = singles as f64 / total as f64;
        assert!((0.3..0.6).contains(&share), "singleton share {share}");
    }

    #[test]
    fn distractors_are_not_mentions() {
        let docs = generate(&SyntheticConfig {
            distractor_rate: 1.0,
            ..Default::default()
        })
        .unwrap();
        for d in &docs {
            let toks: Vec<&str> = d.tokens().collect();
            for m in &d.gold_mentions {
                let text: Vec<&str> = toks[m.span.start..=m.span.end].to_vec();
                assert!(!["end", "way", "moment", "whole", "record", "meantime"]
                    .contains(text.last().unwrap()));
            }
        }
    }
}
