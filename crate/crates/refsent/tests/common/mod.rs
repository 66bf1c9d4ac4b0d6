//! Shared fixtures for integration tests.

use refsent::corpus::{HoursMap, ReviewSample, Weekday};

/// Three canonical samples pinned by the golden prompt files: a typical
/// review, one with awkward quoting, and a minimal one with no hours.
pub fn canonical_samples() -> Vec<ReviewSample> {
    let mut weekday_hours = HoursMap::new();
    for day in [
        Weekday::Monday,
        Weekday::Tuesday,
        Weekday::Wednesday,
        Weekday::Thursday,
        Weekday::Friday,
        Weekday::Saturday,
    ] {
        weekday_hours.insert(day, "11:00-22:00".into());
    }
    let mut full_week = HoursMap::new();
    for day in Weekday::ALL {
        full_week.insert(day, "07:00-15:00".into());
    }
    vec![
        ReviewSample {
            review_id: "canonical-001".into(),
            user_id: "user-001".into(),
            business_id: "biz-001".into(),
            text: "The pasta was cooked perfectly and our server was attentive without hovering. \
                   Prices felt fair for the quality, and the tiramisu was the best I have had in years."
                .into(),
            stars: 4,
            user_average: 3.8,
            business_average: 4.0,
            business_name: "Luigi's Trattoria".into(),
            hours: weekday_hours,
            open_days_per_week: 6,
        },
        ReviewSample {
            review_id: "canonical-002".into(),
            user_id: "user-002".into(),
            business_id: "biz-002".into(),
            text: "Waited forty minutes for a table we had reserved. The burger arrived cold and \
                   the fries were soggy. Truly disappointing visit."
                .into(),
            stars: 1,
            user_average: 4.5,
            business_average: 2.5,
            business_name: "Joe's \"Lucky\" Diner".into(),
            hours: full_week,
            open_days_per_week: 7,
        },
        ReviewSample {
            review_id: "canonical-003".into(),
            user_id: "user-003".into(),
            business_id: "biz-003".into(),
            text: "Great coffee and friendly staff. Will happily return soon!".into(),
            stars: 5,
            user_average: 1.0,
            business_average: 5.0,
            business_name: "Café Azul".into(),
            hours: HoursMap::new(),
            open_days_per_week: 0,
        },
    ]
}
