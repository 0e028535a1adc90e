use std::sync::OnceLock;

use regex::Regex;

use crate::normalize_label;
use crate::scene_graph::{Relation, SemanticAssertion, Source, Tick};

fn statement_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(
            r"(?ix)^\s*(?:(?:the|a|an)\s+)?
              (?P<subject>[^!?]+?)\s+(?:is|are)\s+
              (?P<relation>on|in|at|near)\s+
              (?:the\s+)?(?P<object>[^!?]+?)
              [\s!?,]*$",
        )
        .expect("statement grammar compiles")
    })
}

fn bare_noun_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(
            r"(?ix)^\s*(?:(?:the|a|an|your)\s+)?
              (?P<noun>[a-z][a-z\ ]*?)
              (?:\s+(?:is|are)\s+(?:over\s+)?(?:there|here))?
              [\s.!?,]*$",
        )
        .expect("noun grammar compiles")
    })
}

const NOT_OBJECTS: &[&str] = &["it", "this", "that", "there", "here", "over there", "it's there", "look"];

/// Splits on '.' and ';' and reads each sentence as
/// "[the] X is|are (on|in|at|near) [the] Y".
///
/// ```
/// use hearth_core::cues::interpret_statement;
/// use hearth_core::scene_graph::Source;
/// let found = interpret_statement("Hello robot. The apple is on the cleaning table.", Source::Verbal, 20);
/// assert_eq!(found[0].to_string(), "(apple, on, cleaning table, 0.800, Verbal, t=20)");
/// ```
pub fn interpret_statement(text: &str, source: Source, tick: Tick) -> Vec<SemanticAssertion> {
    text.split(['.', ';'])
        .filter(|s| !s.trim().is_empty())
        .filter_map(|sentence| {
            let parsed = parse_sentence(sentence);
            if parsed.is_none() {
                tracing::debug!(sentence, "no relational content");
            }
            parsed
        })
        .map(|(subject, relation, object)| SemanticAssertion::from_source(subject, relation, object, source, tick))
        .collect()
}

fn parse_sentence(sentence: &str) -> Option<(String, Relation, String)> {
    let caps = statement_pattern().captures(sentence)?;
    let subject = normalize_label(&caps["subject"]);
    let object = normalize_label(&caps["object"]);
    let relation = Relation::parse(&caps["relation"].to_ascii_lowercase())?;
    (!subject.is_empty() && !object.is_empty()).then_some((subject, relation, object))
}

/// The object an utterance accompanying a gesture is about, if any:
/// the subject of a statement, or a bare noun phrase like "the teddy bear".
pub fn utterance_subject(utterance: &str) -> Option<String> {
    if let Some((subject, _, _)) = utterance.split(['.', ';']).find_map(parse_sentence) {
        return Some(subject);
    }
    let caps = bare_noun_pattern().captures(utterance)?;
    let noun = normalize_label(&caps["noun"]);
    (!noun.is_empty() && !NOT_OBJECTS.contains(&noun.as_str()) && noun.split(' ').count() <= 3).then_some(noun)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples(text: &str) -> Vec<(String, Relation, String)> {
        interpret_statement(text, Source::Written, 0)
            .into_iter()
            .map(|a| (a.subject_label, a.relation, a.object_label))
            .collect()
    }

    #[test]
    fn verbal_statement() {
        let a = interpret_statement("The apple is on the cleaning table.", Source::Verbal, 20);
        assert_eq!(a, vec![SemanticAssertion::new("apple", Relation::On, "cleaning table", 0.8, Source::Verbal, 20)]);
    }

    #[test]
    fn written_statement_without_article() {
        let a = interpret_statement("orange is on the cleaning table", Source::Written, 3);
        assert_eq!(a, vec![SemanticAssertion::new("orange", Relation::On, "cleaning table", 0.7, Source::Written, 3)]);
    }

    #[test]
    fn no_relational_content() {
        assert!(triples("Hello robot!").is_empty());
        assert!(triples("").is_empty());
        assert!(triples("the apple is delicious").is_empty());
    }

    #[test]
    fn multiple_sentences_and_relations() {
        assert_eq!(
            triples("Keys are IN the drawer; the cup is near the sink. Mugs are at the shelf!"),
            vec![
                ("keys".into(), Relation::In, "drawer".into()),
                ("cup".into(), Relation::Near, "sink".into()),
                ("mugs".into(), Relation::At, "shelf".into()),
            ]
        );
    }

    #[test]
    fn utterance_subjects() {
        assert_eq!(utterance_subject("The teddy bear is on the dining table.").as_deref(), Some("teddy bear"));
        assert_eq!(utterance_subject("the teddy bear").as_deref(), Some("teddy bear"));
        assert_eq!(utterance_subject("Your apple is over there!").as_deref(), Some("apple"));
        assert_eq!(utterance_subject("over there"), None);
        assert_eq!(utterance_subject("It's there"), None);
        assert_eq!(utterance_subject(""), None);
    }
}
