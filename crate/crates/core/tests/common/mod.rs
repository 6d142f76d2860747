//! Shared helpers for the integration suites.

use graphsum::corpus::{DiscourseRelationType, Meeting};
use rand::Rng;

pub fn toks(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

pub fn meeting_from(
    id: &str,
    utterances: &[(&str, &[&str])],
    relations: &[(usize, DiscourseRelationType, usize)],
    summary: Option<&[&str]>,
) -> Meeting {
    Meeting::new(
        id.to_string(),
        utterances
            .iter()
            .map(|(s, t)| (s.to_string(), toks(t)))
            .collect(),
        relations.to_vec(),
        summary.map(toks),
    )
    .expect("valid fixture meeting")
}

/// Random valid meeting: 1..=max_utt utterances, up to max_rel relations.
pub fn random_meeting(rng: &mut impl Rng, max_utt: usize, max_rel: usize) -> Meeting {
    let n_utt = rng.gen_range(1..=max_utt);
    let utterances: Vec<(String, Vec<String>)> = (0..n_utt)
        .map(|_| {
            let len = rng.gen_range(1..=5);
            (
                format!("s{}", rng.gen_range(0..3)),
                (0..len)
                    .map(|_| format!("w{}", rng.gen_range(0..30)))
                    .collect(),
            )
        })
        .collect();
    let n_rel = if n_utt < 2 { 0 } else { rng.gen_range(0..=max_rel) };
    let relations: Vec<(usize, DiscourseRelationType, usize)> = (0..n_rel)
        .map(|_| {
            let src = rng.gen_range(0..n_utt);
            let mut tgt = rng.gen_range(0..n_utt);
            while tgt == src {
                tgt = rng.gen_range(0..n_utt);
            }
            let relation =
                DiscourseRelationType::ALL[rng.gen_range(0..DiscourseRelationType::ALL.len())];
            (src, relation, tgt)
        })
        .collect();
    let summary = if rng.gen_bool(0.5) {
        Some(
            (0..rng.gen_range(1..=4))
                .map(|_| format!("w{}", rng.gen_range(0..30)))
                .collect(),
        )
    } else {
        None
    };
    Meeting::new(format!("rand-{n_utt}-{n_rel}"), utterances, relations, summary)
        .expect("random meeting is valid")
}

/// The five-meeting corpus used by the overfit and warm-start runs.
pub fn overfit_meetings() -> Vec<Meeting> {
    vec![
        meeting_from(
            "ov1",
            &[
                ("A", &["the", "red", "button", "starts", "the", "machine"]),
                ("B", &["which", "button", "stops", "it"]),
                ("A", &["the", "black", "button", "stops", "the", "machine"]),
                ("B", &["good", "to", "know"]),
            ],
            &[
                (0, DiscourseRelationType::Continuation, 1),
                (1, DiscourseRelationType::QuestionAnswer, 2),
                (2, DiscourseRelationType::Acknowledgment, 3),
            ],
            Some(&["red", "starts", "and", "black", "stops", "the", "machine"]),
        ),
        meeting_from(
            "ov2",
            &[
                ("A", &["we", "meet", "on", "monday", "morning"]),
                ("B", &["monday", "is", "a", "holiday"]),
                ("A", &["then", "we", "meet", "on", "tuesday"]),
                ("B", &["tuesday", "works", "for", "everyone"]),
            ],
            &[
                (0, DiscourseRelationType::Contrast, 1),
                (1, DiscourseRelationType::Result, 2),
                (2, DiscourseRelationType::Acknowledgment, 3),
            ],
            Some(&["the", "meeting", "moved", "from", "monday", "to", "tuesday"]),
        ),
        meeting_from(
            "ov3",
            &[
                ("A", &["the", "case", "should", "be", "yellow"]),
                ("B", &["yellow", "fades", "in", "sunlight"]),
                ("A", &["we", "add", "a", "coating", "against", "fading"]),
                ("B", &["a", "coating", "sounds", "fine"]),
            ],
            &[
                (0, DiscourseRelationType::Contrast, 1),
                (1, DiscourseRelationType::Result, 2),
                (2, DiscourseRelationType::Acknowledgment, 3),
            ],
            Some(&["the", "yellow", "case", "gets", "a", "protective", "coating"]),
        ),
        meeting_from(
            "ov4",
            &[
                ("A", &["sales", "dropped", "in", "march"]),
                ("B", &["why", "did", "sales", "drop"]),
                ("A", &["a", "rival", "cut", "their", "prices"]),
                ("B", &["we", "should", "answer", "with", "a", "discount"]),
            ],
            &[
                (0, DiscourseRelationType::Background, 1),
                (1, DiscourseRelationType::QuestionAnswer, 2),
                (2, DiscourseRelationType::Result, 3),
            ],
            Some(&["sales", "dropped", "because", "a", "rival", "cut", "prices"]),
        ),
        meeting_from(
            "ov5",
            &[
                ("A", &["the", "battery", "lasts", "two", "weeks"]),
                ("B", &["users", "want", "a", "month"]),
                ("A", &["a", "bigger", "cell", "doubles", "the", "life"]),
                ("B", &["then", "take", "the", "bigger", "cell"]),
            ],
            &[
                (0, DiscourseRelationType::Contrast, 1),
                (1, DiscourseRelationType::Result, 2),
                (2, DiscourseRelationType::Result, 3),
            ],
            Some(&["a", "bigger", "cell", "doubles", "the", "battery", "life"]),
        ),
    ]
}
