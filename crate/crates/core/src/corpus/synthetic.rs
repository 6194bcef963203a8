//! Template-driven synthetic corpora.
//!
//! Each sample instantiates one template: typed slots are filled with entities
//! drawn from a per-domain gazetteer, wrong answers redraw the answer-only slots
//! with other entities of the same type. Knowledge sentences may refer to
//! entities through an alias (e.g. a surname or an acronym's long form), which
//! is the situation where entity *types* carry signal that names do not.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Origin, QASample, Result, Split};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityName {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl EntityName {
    pub fn new(name: &str, aliases: &[&str]) -> Self {
        EntityName {
            name: name.into(),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
        }
    }
}

/// Question/answer/knowledge patterns with `{0}`, `{1}`, ... slot placeholders
/// and an optional `{m}` marker placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub question: String,
    pub answer: String,
    pub knowledge: String,
    /// Allowed entity type labels for each slot.
    pub slots: Vec<Vec<String>>,
}

impl Template {
    pub fn new(question: &str, answer: &str, knowledge: &str, slots: &[&[&str]]) -> Self {
        Template {
            question: question.into(),
            answer: answer.into(),
            knowledge: knowledge.into(),
            slots: slots
                .iter()
                .map(|s| s.iter().map(|l| l.to_string()).collect())
                .collect(),
        }
    }

    fn slots_in(pattern: &str) -> BTreeSet<usize> {
        let mut found = BTreeSet::new();
        let mut rest = pattern;
        while let Some(open) = rest.find('{') {
            rest = &rest[open + 1..];
            if let Some(close) = rest.find('}') {
                if let Ok(i) = rest[..close].parse::<usize>() {
                    found.insert(i);
                }
                rest = &rest[close + 1..];
            }
        }
        found
    }

    /// Slots the wrong answers redraw: those in the answer but not in the question,
    /// or every answer slot if the answer only repeats question slots.
    fn answer_only_slots(&self) -> Vec<usize> {
        let in_q = Self::slots_in(&self.question);
        let in_a = Self::slots_in(&self.answer);
        let only: Vec<usize> = in_a.difference(&in_q).copied().collect();
        if only.is_empty() {
            in_a.into_iter().collect()
        } else {
            only
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub name: String,
    pub domain_tag: String,
    pub templates: Vec<Template>,
    /// Entity pool per type label.
    pub entities: BTreeMap<String, Vec<EntityName>>,
    pub n_samples: usize,
    pub n_answers: usize,
    /// Adds a per-sample nonce word shared by question, correct answer and knowledge.
    #[serde(default)]
    pub unique_markers: bool,
    /// Probability that a knowledge mention uses an alias instead of the name.
    #[serde(default)]
    pub alias_rate: f64,
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CorpusError::Generator(m));
        if self.templates.is_empty() {
            return err("empty template pool".into());
        }
        if self.entities.is_empty() || self.entities.values().all(|v| v.is_empty()) {
            return err("empty gazetteer".into());
        }
        if self.n_answers < 2 {
            return err(format!("n_answers must be at least 2, got {}", self.n_answers));
        }
        if !(0.0..=1.0).contains(&self.alias_rate) {
            return err(format!("alias_rate {} not in [0, 1]", self.alias_rate));
        }
        for (ti, t) in self.templates.iter().enumerate() {
            let used: BTreeSet<usize> = [&t.question, &t.answer, &t.knowledge]
                .iter()
                .flat_map(|p| Template::slots_in(p))
                .collect();
            if let Some(&bad) = used.iter().find(|&&i| i >= t.slots.len()) {
                return err(format!("template {ti} uses slot {{{bad}}} but declares {} slots", t.slots.len()));
            }
            let redrawn = t.answer_only_slots();
            for (si, labels) in t.slots.iter().enumerate() {
                if labels.is_empty() {
                    return err(format!("template {ti} slot {si} allows no type"));
                }
                for l in labels {
                    let pool = self.entities.get(l).map_or(0, Vec::len);
                    // answer-only slots need one distinct entity per candidate answer
                    let need = if redrawn.contains(&si) {
                        self.n_answers + t.slots.len() - 1
                    } else {
                        1
                    };
                    if pool < need {
                        return err(format!(
                            "template {ti} slot {si}: type {l:?} has {pool} entities, needs {need}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every (surface form, type label) pair the generator can emit.
    pub fn gazetteer_entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (label, names) in &self.entities {
            for e in names {
                out.push((e.name.clone(), label.clone()));
                for a in &e.aliases {
                    out.push((a.clone(), label.clone()));
                }
            }
        }
        out
    }
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl", "kr",
    "pl", "tr",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "au", "ei", "ou"];

struct Markers {
    used: HashSet<String>,
}

impl Markers {
    fn new(reserved: impl IntoIterator<Item = String>) -> Self {
        Markers {
            used: reserved.into_iter().collect(),
        }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..3 {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(NUCLEI.choose(rng).unwrap());
            }
            w.push_str(["x", "n", "k", "m"].choose(rng).unwrap());
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn fill(pattern: &str, names: &[&str], marker: Option<&str>) -> String {
    let mut out = pattern.to_string();
    for (i, n) in names.iter().enumerate() {
        out = out.replace(&format!("{{{i}}}"), n);
    }
    match marker {
        Some(m) if out.contains("{m}") => out.replace("{m}", m),
        Some(m) => {
            let trimmed = out.trim_end_matches(['?', '.', '!']);
            let tail = out[trimmed.len()..].to_string();
            format!("{trimmed} {m}{tail}")
        }
        None => out.replace("{m}", ""),
    }
}

/// Generates a deterministic synthetic dataset for the given seed.
pub fn generate_synthetic(config: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaz = config.gazetteer_entries();
    let reserved = config
        .templates
        .iter()
        .flat_map(|t| [&t.question, &t.answer, &t.knowledge])
        .flat_map(|p| tokenize(p))
        .chain(
            gaz.iter()
                .flat_map(|(s, l)| tokenize(s).into_iter().chain(tokenize(l))),
        );
    let mut markers = Markers::new(reserved);
    let mut samples = Vec::with_capacity(config.n_samples);

    for i in 0..config.n_samples {
        let t = config.templates.choose(&mut rng).unwrap();
        let labels: Vec<&str> = t
            .slots
            .iter()
            .map(|opts| opts.choose(&mut rng).unwrap().as_str())
            .collect();
        let mut chosen: Vec<&EntityName> = Vec::with_capacity(labels.len());
        for label in &labels {
            let pool = &config.entities[*label];
            let free: Vec<&EntityName> = pool
                .iter()
                .filter(|e| !chosen.iter().any(|c| c.name == e.name))
                .collect();
            let pick = if free.is_empty() {
                pool.choose(&mut rng).unwrap()
            } else {
                free.choose(&mut rng).unwrap()
            };
            chosen.push(pick);
        }
        let marker = config.unique_markers.then(|| markers.fresh(&mut rng));
        let names: Vec<&str> = chosen.iter().map(|e| e.name.as_str()).collect();

        let question = fill(&t.question, &names, marker.as_deref());
        let correct = fill(&t.answer, &names, marker.as_deref());

        let redraw = t.answer_only_slots();
        let mut wrong = Vec::with_capacity(config.n_answers - 1);
        let mut taken: Vec<Vec<&str>> = vec![redraw.iter().map(|&s| names[s]).collect()];
        for _ in 1..config.n_answers {
            let mut alt = names.clone();
            for &s in &redraw {
                let pool = &config.entities[labels[s]];
                let options: Vec<&EntityName> = pool
                    .iter()
                    .filter(|e| {
                        !names.contains(&e.name.as_str())
                            && !taken.iter().any(|tk| tk.contains(&e.name.as_str()))
                    })
                    .collect();
                alt[s] = options
                    .choose(&mut rng)
                    .map(|e| e.name.as_str())
                    .ok_or_else(|| CorpusError::Generator("entity pool exhausted".into()))?;
            }
            taken.push(redraw.iter().map(|&s| alt[s]).collect());
            let wrong_marker = config.unique_markers.then(|| markers.fresh(&mut rng));
            wrong.push(fill(&t.answer, &alt, wrong_marker.as_deref()));
        }

        let know_names: Vec<&str> = chosen
            .iter()
            .map(|e| {
                if !e.aliases.is_empty() && rng.random_bool(config.alias_rate) {
                    e.aliases.choose(&mut rng).unwrap().as_str()
                } else {
                    e.name.as_str()
                }
            })
            .collect();
        let knowledge = fill(&t.knowledge, &know_names, marker.as_deref());

        let correct_index = rng.random_range(0..config.n_answers);
        let mut answers = wrong;
        answers.insert(correct_index, correct);

        samples.push(QASample {
            sample_id: format!("{}-{i:05}", config.name),
            clip_id: format!("{}-clip-{i:05}", config.name),
            question,
            answers,
            correct_index,
            knowledge,
            subtitles: String::new(),
            origin: Origin::Original,
        });
    }
    let mut d = Dataset::new(config.name.clone(), Split::Train, samples);
    d.domain_tag = config.domain_tag.clone();
    Ok(d)
}

/// Built-in template pool and two entity-disjoint domains.
pub mod presets {
    use super::*;

    pub fn shared_templates() -> Vec<Template> {
        const HOLDER: &[&str] = &["person", "organisation"];
        vec![
            Template::new(
                "Why was {0} upset with {1}?",
                "because {1} forgot {2}",
                "{0} was upset because {1} forgot {2} again.",
                &[HOLDER, &["person", "organisation", "location"], &["event", "date", "product", "location"]],
            ),
            Template::new(
                "What did {0} bring to {1}?",
                "{2}",
                "{0} brought {2} along when visiting {1}.",
                &[HOLDER, &["location", "event", "organisation"], &["product", "date", "event"]],
            ),
            Template::new(
                "Where did {0} meet {1}?",
                "at {2}",
                "{0} first met {1} at {2} during the holidays.",
                &[&["person"], HOLDER, &["location", "event", "organisation"]],
            ),
            Template::new(
                "Who helped {0} prepare for {1}?",
                "{2}",
                "{2} spent the whole week helping {0} get ready for {1}.",
                &[HOLDER, &["event", "date", "location"], HOLDER],
            ),
            Template::new(
                "Why did {0} call {1}?",
                "to ask about {2}",
                "{0} phoned {1} to ask about {2}.",
                &[HOLDER, &["person", "organisation", "location"], &["product", "event", "date", "location"]],
            ),
            Template::new(
                "What was {0} worried about before {1}?",
                "losing {2}",
                "Before {1}, {0} kept worrying about losing {2}.",
                &[&["person"], &["event", "date"], &["product", "person", "location"]],
            ),
            Template::new(
                "How did {0} end up at {1}?",
                "{2} drove there",
                "{2} drove {0} all the way to {1}.",
                &[&["person"], &["location", "event", "organisation"], HOLDER],
            ),
            Template::new(
                "What surprised {0} about {1}?",
                "the news about {2}",
                "{0} was surprised to hear that {1} was connected to {2}.",
                &[HOLDER, &["location", "organisation", "event"], &["person", "product", "date", "event"]],
            ),
        ]
    }

    fn pool(entries: &[(&str, &str)]) -> Vec<EntityName> {
        entries.iter().map(|(n, a)| EntityName::new(n, &[a])).collect()
    }

    pub fn source_entities() -> BTreeMap<String, Vec<EntityName>> {
        BTreeMap::from([
            ("person".to_string(), pool(&[
                ("Marlo", "Quint"), ("Tessa", "Vandergrift"), ("Orrin", "Balestra"),
                ("Pippa", "Lindqvist"), ("Dorian", "Achterberg"), ("Wren", "Okonjo"),
                ("Celeste", "Marchetti"), ("Fitz", "Haldane"),
            ])),
            ("organisation".to_string(), pool(&[
                ("NRC", "Northfield Research Council"), ("QTI", "Quorum Tech Institute"),
                ("AFL", "Aldermoor Film League"), ("PSA", "Pemberton Science Academy"),
                ("LBD", "Larch Bay Dispatch"), ("KSO", "Kestrel Symphony Orchestra"),
            ])),
            ("location".to_string(), pool(&[
                ("Brightwater", "Harrow Pier"), ("Ostend Park", "Wilder Green"),
                ("Calloway Mall", "Mercer Arcade"), ("Redfern", "Sable Quarter"),
                ("Dunmore Station", "Eastgate Depot"), ("Lowell Lab", "Corridor Nine"),
            ])),
            ("product".to_string(), pool(&[
                ("Zephyr Kit", "Model Z7"), ("Aurora Lamp", "Lightbox Mk2"),
                ("Tinker Deck", "Card Set Omega"), ("Quasar Watch", "Chrono Q"),
                ("Nimbus Drone", "Skyhopper"), ("Pixel Scope", "Starfinder Lens"),
            ])),
            ("event".to_string(), pool(&[
                ("Founders Gala", "Spring Soiree"), ("Robotics Expo", "Mechfest"),
                ("Comic Convention", "Panelcon"), ("Harvest Fair", "Autumn Market"),
                ("Poster Session", "Research Showcase"), ("Chess Open", "Grandmaster Cup"),
            ])),
            ("date".to_string(), pool(&[
                ("Halloween", "Hallowmas"), ("Midsummer", "Solstice Night"),
                ("Thanksgiving", "Turkey Thursday"), ("Walpurgis", "Maypole Night"),
                ("Groundhog Morning", "Candlemas"), ("Epiphany", "Twelfth Night"),
            ])),
        ])
    }

    pub fn target_entities() -> BTreeMap<String, Vec<EntityName>> {
        BTreeMap::from([
            ("person".to_string(), pool(&[
                ("Juno", "Castellane"), ("Rafe", "Delacroix"), ("Imogen", "Strand"),
                ("Bastian", "Kovacs"), ("Lyra", "Montague"), ("Cassius", "Fairweather"),
                ("Odette", "Rinaldi"), ("Emrys", "Caldwell"),
            ])),
            ("organisation".to_string(), pool(&[
                ("GMC", "Greenway Media Collective"), ("HBT", "Harbor Bistro Trust"),
                ("VPA", "Villiers Performing Arts"), ("CRC", "Central Rowing Club"),
                ("MNN", "Metro Nightly News"), ("BFS", "Bellamy Fashion Studio"),
            ])),
            ("location".to_string(), pool(&[
                ("Perk Place", "Espresso Loft"), ("Bowery Flats", "Apartment Twenty"),
                ("Saltmarsh", "Gull Point"), ("Ellery Square", "Fountain Court"),
                ("Wexford Hall", "Grand Ballroom"), ("Thornbury", "Maple Crossing"),
            ])),
            ("product".to_string(), pool(&[
                ("Foosball Table", "Match Stand"), ("Duck Pond Bundle", "Mallard Crate"),
                ("Recliner Duo", "Lounge Twins"), ("Velvet Couch", "Orange Sofa"),
                ("Canvas Tote", "Carryall Bag"), ("Jukebox Mini", "Tunebox"),
            ])),
            ("event".to_string(), pool(&[
                ("Rehearsal Dinner", "Wedding Eve Supper"), ("Talent Show", "Amateur Hour"),
                ("Charity Run", "Fun Marathon"), ("Holiday Party", "Office Bash"),
                ("Book Launch", "Reading Premiere"), ("Pottery Class", "Clay Workshop"),
            ])),
            ("date".to_string(), pool(&[
                ("Easter", "Paschal Feast"), ("Mardi Gras", "Fat Tuesday"),
                ("Labor Day", "September Monday"), ("Bastille Day", "Quatorze Juillet"),
                ("Hanukkah", "Festival Lights"), ("Kwanzaa", "Harambee Week"),
            ])),
        ])
    }

    fn config(name: &str, entities: BTreeMap<String, Vec<EntityName>>, n: usize) -> GeneratorConfig {
        GeneratorConfig {
            name: name.into(),
            domain_tag: name.into(),
            templates: shared_templates(),
            entities,
            n_samples: n,
            n_answers: 4,
            unique_markers: false,
            alias_rate: 0.8,
        }
    }

    /// Source domain: knowledge mostly refers to entities by alias.
    pub fn source(n: usize) -> GeneratorConfig {
        config("source", source_entities(), n)
    }

    /// Target domain: same templates, disjoint entities.
    pub fn target(n: usize) -> GeneratorConfig {
        config("target", target_entities(), n)
    }

    /// Knowledge shares a unique nonce word and the entity names with its query.
    pub fn separable(n: usize) -> GeneratorConfig {
        GeneratorConfig {
            unique_markers: true,
            alias_rate: 0.0,
            ..config("separable", source_entities(), n)
        }
    }

    pub fn by_name(name: &str, n: usize) -> Option<GeneratorConfig> {
        match name {
            "source" => Some(source(n)),
            "target" => Some(target(n)),
            "separable" => Some(separable(n)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GeneratorConfig {
        GeneratorConfig {
            name: "tiny".into(),
            domain_tag: "tiny".into(),
            templates: vec![Template::new("Why was {0} acting weird?", "{0}", "{0} is odd.", &[&["person"]])],
            entities: BTreeMap::from([(
                "person".to_string(),
                vec![
                    EntityName::new("Chandler", &[]),
                    EntityName::new("Monica", &[]),
                    EntityName::new("Ross", &[]),
                    EntityName::new("Joey", &[]),
                ],
            )]),
            n_samples: 1,
            n_answers: 4,
            unique_markers: false,
            alias_rate: 0.0,
        }
    }

    #[test]
    fn single_template_fills_question() {
        let mut cfg = tiny();
        cfg.entities.get_mut("person").unwrap().truncate(4);
        let d = generate_synthetic(&cfg, 3).unwrap();
        assert_eq!(d.len(), 1);
        let s = &d.samples[0];
        let name = s.correct_answer();
        assert_eq!(s.question, format!("Why was {name} acting weird?"));
        assert_eq!(s.knowledge, format!("{name} is odd."));
        let distinct: BTreeSet<&String> = s.answers.iter().collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn errors_on_empty_pools() {
        let mut cfg = tiny();
        cfg.templates.clear();
        assert!(generate_synthetic(&cfg, 0).is_err());
        let mut cfg = tiny();
        cfg.entities.clear();
        assert!(generate_synthetic(&cfg, 0).is_err());
        let mut cfg = tiny();
        cfg.entities.get_mut("person").unwrap().truncate(2);
        assert!(generate_synthetic(&cfg, 0).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_synthetic(&presets::target(60), 11).unwrap();
        let b = generate_synthetic(&presets::target(60), 11).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.to_jsonl(&mut ba).unwrap();
        b.to_jsonl(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let c = generate_synthetic(&presets::target(60), 12).unwrap();
        assert_ne!(a, c);
    }

    fn entity_tokens(cfg: &GeneratorConfig, d: &Dataset) -> BTreeSet<String> {
        let vocab: BTreeSet<String> = cfg
            .gazetteer_entries()
            .iter()
            .flat_map(|(s, _)| tokenize(s))
            .collect();
        d.samples
            .iter()
            .flat_map(|s| tokenize(&s.question))
            .filter(|t| vocab.contains(t))
            .collect()
    }

    #[test]
    fn disjoint_domains_share_no_entity_tokens() {
        let (sc, tc) = (presets::source(200), presets::target(200));
        let s = generate_synthetic(&sc, 1).unwrap();
        let t = generate_synthetic(&tc, 2).unwrap();
        let st = entity_tokens(&sc, &s);
        let tt = entity_tokens(&tc, &t);
        assert!(!st.is_empty() && !tt.is_empty());
        assert!(st.is_disjoint(&tt), "{:?}", st.intersection(&tt).collect::<Vec<_>>());
        // the gazetteers themselves are token-disjoint
        let all = |c: &GeneratorConfig| -> BTreeSet<String> {
            c.gazetteer_entries().iter().flat_map(|(s, _)| tokenize(s)).collect()
        };
        assert!(all(&sc).is_disjoint(&all(&tc)), "{:?}", all(&sc).intersection(&all(&tc)).collect::<Vec<_>>());
    }

    #[test]
    fn markers_are_unique_and_shared_with_knowledge() {
        let d = generate_synthetic(&presets::separable(100), 5).unwrap();
        let mut seen = HashSet::new();
        for s in &d.samples {
            let q: BTreeSet<String> = tokenize(&s.question).into_iter().collect();
            let k: BTreeSet<String> = tokenize(&s.knowledge).into_iter().collect();
            let a: BTreeSet<String> = tokenize(s.correct_answer()).into_iter().collect();
            let shared: Vec<&String> = q.intersection(&k).filter(|t| a.contains(*t)).collect();
            assert!(!shared.is_empty());
            assert!(seen.insert(s.knowledge.clone()));
        }
    }

    #[test]
    fn preset_labels_avoid_template_words() {
        let words: BTreeSet<String> = presets::shared_templates()
            .iter()
            .flat_map(|t| [t.question.clone(), t.answer.clone(), t.knowledge.clone()])
            .flat_map(|p| tokenize(&p))
            .collect();
        for label in presets::source_entities().keys() {
            assert!(!words.contains(label), "{label}");
        }
    }
}
