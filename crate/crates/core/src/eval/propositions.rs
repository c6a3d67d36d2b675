use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::captioner::vocab::tokenize;
use crate::palette::Palette;
use crate::scene::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PropositionKind {
    Action,
    Object,
    Region,
    Relation,
}

/// A semantic tuple: unary for actions, objects and regions; binary
/// (action, object-or-region) for relations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Proposition {
    pub kind: PropositionKind,
    pub terms: Vec<String>,
}

impl Proposition {
    pub fn action(t: &str) -> Self {
        Self { kind: PropositionKind::Action, terms: vec![t.into()] }
    }

    pub fn object(t: &str) -> Self {
        Self { kind: PropositionKind::Object, terms: vec![t.into()] }
    }

    pub fn region(t: &str) -> Self {
        Self { kind: PropositionKind::Region, terms: vec![t.into()] }
    }

    pub fn relation(action: &str, target: &str) -> Self {
        Self { kind: PropositionKind::Relation, terms: vec![action.into(), target.into()] }
    }
}

/// Surface form → canonical action.
pub const ACTION_SYNONYMS: [(&str, &str); 12] = [
    ("left", "left"),
    ("right", "right"),
    ("straight", "straight"),
    ("forward", "straight"),
    ("ahead", "straight"),
    ("stop", "stop"),
    ("wait", "stop"),
    ("halt", "stop"),
    ("exit", "exit"),
    ("leave", "exit"),
    ("enter", "enter"),
    ("walk into", "enter"),
];

const CLAUSE_BREAKS: [&str; 6] = [",", ".", ";", "and", "then", "!"];

#[derive(Debug, Clone)]
pub struct Lexicon {
    /// token sequence → (kind, canonical term)
    entries: HashMap<Vec<String>, (PropositionKind, String)>,
    longest: usize,
}

impl Lexicon {
    pub fn new<'o, 'r>(objects: impl IntoIterator<Item = &'o str>, regions: impl IntoIterator<Item = &'r str>) -> Self {
        let mut lex = Self { entries: HashMap::new(), longest: 1 };
        for (surface, canon) in ACTION_SYNONYMS {
            lex.insert(surface, PropositionKind::Action, canon);
        }
        for r in regions {
            lex.insert(r, PropositionKind::Region, r);
        }
        for o in objects {
            lex.insert(o, PropositionKind::Object, o);
            if o.contains('_') {
                lex.insert(&o.replace('_', " "), PropositionKind::Object, o);
            }
        }
        lex
    }

    /// Palette object categories plus every region name in `episodes`.
    pub fn from_episodes<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> Self {
        let mut regions: BTreeSet<&'a str> = BTreeSet::new();
        for e in episodes {
            regions.extend(e.point_regions.iter().flatten().map(String::as_str));
        }
        Self::new(Palette::standard().categories(), regions)
    }

    fn insert(&mut self, surface: &str, kind: PropositionKind, canonical: &str) {
        let key = tokenize(surface);
        if key.is_empty() {
            return;
        }
        self.longest = self.longest.max(key.len());
        // first registration wins, so action words keep their meaning
        self.entries.entry(key).or_insert((kind, canonical.to_owned()));
    }

    fn longest_match(&self, tokens: &[String]) -> Option<(usize, &(PropositionKind, String))> {
        (1..=self.longest.min(tokens.len()))
            .rev()
            .find_map(|len| self.entries.get(&tokens[..len]).map(|hit| (len, hit)))
    }
}

pub fn extract_propositions(text: &str, lexicon: &Lexicon) -> BTreeSet<Proposition> {
    let tokens = tokenize(text);
    let mut out = BTreeSet::new();
    for clause in tokens.split(|t| CLAUSE_BREAKS.contains(&t.as_str())) {
        let mut actions = Vec::new();
        let mut targets = Vec::new();
        let mut i = 0;
        while i < clause.len() {
            match lexicon.longest_match(&clause[i..]) {
                Some((len, (kind, term))) => {
                    out.insert(Proposition { kind: *kind, terms: vec![term.clone()] });
                    match kind {
                        PropositionKind::Action => actions.push(term.clone()),
                        _ => targets.push(term.clone()),
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        for a in &actions {
            for t in &targets {
                out.insert(Proposition::relation(a, t));
            }
        }
    }
    out
}

/// F1 of two proposition sets; both empty scores 1, exactly one empty 0.
pub fn set_f1(candidate: &BTreeSet<Proposition>, reference: &BTreeSet<Proposition>) -> f64 {
    match (candidate.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let hits = candidate.intersection(reference).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let p = hits / candidate.len() as f64;
    let r = hits / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Candidate propositions against the union over all references.
pub fn proposition_f1<S: AsRef<str>>(candidate: &str, references: &[S], lexicon: &Lexicon) -> f64 {
    let cand = extract_propositions(candidate, lexicon);
    let mut refs = BTreeSet::new();
    for r in references {
        refs.extend(extract_propositions(r.as_ref(), lexicon));
    }
    set_f1(&cand, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicon {
        Lexicon::new(["sofa", "chest_of_drawers", "table", "tv_monitor"], ["living room", "kitchen"])
    }

    #[test]
    fn worked_example() {
        let got = extract_propositions("turn left and stop at the sofa", &lex());
        let want: BTreeSet<_> = [
            Proposition::action("left"),
            Proposition::action("stop"),
            Proposition::object("sofa"),
            Proposition::relation("stop", "sofa"),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_and_repeated() {
        assert!(extract_propositions("", &lex()).is_empty());
        let got = extract_propositions("the sofa is next to the sofa", &lex());
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn longest_match_and_synonyms() {
        let got = extract_propositions("Leave the Living Room, walk forward past the chest of drawers.", &lex());
        assert!(got.contains(&Proposition::action("exit")));
        assert!(got.contains(&Proposition::region("living room")));
        assert!(got.contains(&Proposition::relation("exit", "living room")));
        assert!(got.contains(&Proposition::action("straight")));
        assert!(got.contains(&Proposition::object("chest_of_drawers")));
        assert!(got.contains(&Proposition::relation("straight", "chest_of_drawers")));
        assert!(!got.contains(&Proposition::relation("exit", "chest_of_drawers")));
    }

    #[test]
    fn f1_cases() {
        let l = lex();
        assert_eq!(proposition_f1("turn left at the sofa", &["turn left at the sofa"], &l), 1.0);
        assert_eq!(proposition_f1("turn left", &["enter the kitchen"], &l), 0.0);
        assert_eq!(proposition_f1("", &["hello there"], &l), 1.0);
        assert_eq!(proposition_f1("", &["turn left"], &l), 0.0);
        assert_eq!(proposition_f1("turn left", &[""], &l), 0.0);
        // 2 correct of 2, reference has 4 → P=1, R=1/2
        let f = proposition_f1("turn left. the sofa", &["turn left at the sofa, then wait"], &l);
        assert!((f - 2.0 / 3.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn f1_symmetric_for_single_reference() {
        let l = lex();
        let a = "turn left at the sofa, then stop in the kitchen";
        let b = "exit the kitchen and turn right at the table";
        assert_eq!(proposition_f1(a, &[b], &l), proposition_f1(b, &[a], &l));
    }
}
