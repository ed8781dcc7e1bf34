//! Built-in restaurant/taxi/ticketing domains. Every domain pairs a count
//! slot with a time slot over the same number words, and two location-like
//! slots over a shared set of place names, so a bare answer such as
//! "three" can only be resolved from the question it answers.

use std::collections::BTreeMap;

use super::generator::{DomainSpec, MultiSlotQuestion, SlotSpec};
use crate::error::{Error, Result};

pub const DOMAIN_NAMES: [&str; 5] = ["orderfood", "reservation", "taxi", "events", "movieticket"];

const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

fn strs(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn slot(name: &str, class: Option<&str>, values: &[&str], questions: &[&str], answers: &[&str]) -> SlotSpec {
    SlotSpec {
        name: name.into(),
        class: class.map(String::from),
        values: strs(values),
        questions: strs(questions),
        answers: strs(answers),
    }
}

fn multi(slots: &[&str], questions: &[&str]) -> MultiSlotQuestion {
    MultiSlotQuestion {
        slots: strs(slots),
        questions: strs(questions),
    }
}

fn base(
    name: &str,
    ambiguity: f64,
    slots: Vec<SlotSpec>,
    places: &[&str],
    multi_questions: Vec<MultiSlotQuestion>,
    openings: &[&str],
) -> DomainSpec {
    DomainSpec {
        name: name.into(),
        slots,
        shared_lexicons: BTreeMap::from([
            ("number".to_string(), strs(NUMBER_WORDS)),
            ("place".to_string(), strs(places)),
        ]),
        multi_questions,
        opening_prompts: strs(&["how can i help you ?", "what can i do for you ?"]),
        openings: strs(openings),
        bare_answers: strs(&["{v}", "{v} please", "actually it's {v}", "make it {v}", "um {v}"]),
        closing_prompts: strs(&["anything else ?", "is that all ?", "shall i confirm ?"]),
        closing_replies: strs(&["no thanks", "that's all", "yes please", "no", "yes", "sounds good"]),
        ambiguity,
        multi_rate: 0.15,
        opening_rate: 0.4,
        closing_rate: 0.25,
        min_turns: 2,
        max_turns: 5,
    }
}

fn reservation(ambiguity: f64) -> DomainSpec {
    base(
        "reservation",
        ambiguity,
        vec![
            slot(
                "place_name",
                Some("place"),
                &["pizza hut", "olive garden", "red lobster", "golden dragon", "chez panisse"],
                &["where do you want to reserve ?", "which restaurant would you like ?"],
                &["at {v}", "i want {v}", "book {v}"],
            ),
            slot(
                "number_people",
                Some("number"),
                &["2", "3", "4", "5", "6", "8"],
                &["for how many people ?", "how many guests ?"],
                &["for {v} people", "{v} people", "a table for {v}", "party of {v}"],
            ),
            slot(
                "time",
                Some("number"),
                &["7pm", "8pm", "6:30", "noon", "7:30pm", "9pm"],
                &["what time should i make the reservation for ?", "what time works for you ?"],
                &["at {v}", "around {v}", "{v} works"],
            ),
            slot(
                "date",
                None,
                &["tomorrow", "tonight", "friday", "saturday", "sunday"],
                &["which day ?", "for what date ?"],
                &["on {v}", "for {v}"],
            ),
            slot(
                "cuisine",
                None,
                &["italian", "mexican", "thai", "sushi", "indian"],
                &["what kind of food ?", "any cuisine in mind ?"],
                &["{v} food", "something {v}"],
            ),
            slot(
                "area",
                Some("place"),
                &["downtown", "midtown", "uptown", "waterfront", "soho"],
                &["which neighborhood ?", "what area should i search ?"],
                &["in {v}", "near {v}", "somewhere in {v}"],
            ),
            slot(
                "price_range",
                None,
                &["cheap", "moderate", "expensive", "fancy"],
                &["what price range ?", "how much do you want to spend ?"],
                &["something {v}", "{v} is fine"],
            ),
            slot(
                "booking_name",
                None,
                &["john", "maria", "li wei", "ahmed", "sarah"],
                &["under what name ?", "what name should i use ?"],
                &["under {v}", "the name is {v}"],
            ),
            slot(
                "seating",
                None,
                &["outdoor", "patio", "booth", "window", "bar"],
                &["any seating preference ?", "where would you like to sit ?"],
                &["{v} seating", "a {v} table"],
            ),
        ],
        &["union square", "harbor view", "park plaza", "riverside", "lakeshore"],
        vec![
            multi(
                &["time", "date"],
                &["okay . what time should i make the reservation for ?", "what day and time ?"],
            ),
            multi(&["cuisine", "price_range"], &["what food and budget ?"]),
        ],
        &[
            "book a table at {place_name}",
            "i need a reservation {date}",
            "find me {cuisine} food in {area}",
            "reserve a table",
            "i want to eat out",
        ],
    )
}

fn taxi(ambiguity: f64) -> DomainSpec {
    base(
        "taxi",
        ambiguity,
        vec![
            slot(
                "pickup_location",
                Some("place"),
                &["hilton hotel", "marriott", "hyatt regency", "holiday inn"],
                &["where should i pick you up ?", "where are you now ?"],
                &["from {v}", "pick me up at {v}", "i am at {v}"],
            ),
            slot(
                "dropoff_location",
                Some("place"),
                &["stadium", "museum", "harbor", "zoo", "convention center"],
                &["where are you going ?", "what is your destination ?"],
                &["to {v}", "take me to {v}", "going to {v}"],
            ),
            slot(
                "pickup_time",
                Some("number"),
                &["now", "asap", "6am", "7:45", "8:15am", "noon"],
                &["when do you need the ride ?", "what time should the driver come ?"],
                &["at {v}", "around {v}"],
            ),
            slot(
                "number_passengers",
                Some("number"),
                &["2", "3", "4", "5", "6"],
                &["how many passengers ?", "how many people are riding ?"],
                &["{v} passengers", "{v} of us", "we are {v}"],
            ),
            slot(
                "car_type",
                None,
                &["suv", "sedan", "minivan", "luxury car", "uberx"],
                &["what kind of car ?", "which vehicle type ?"],
                &["a {v}", "an {v}", "send a {v}"],
            ),
            slot(
                "payment_method",
                None,
                &["cash", "credit card", "paypal", "apple pay"],
                &["how will you pay ?", "what payment method ?"],
                &["with {v}", "by {v}", "i will pay {v}"],
            ),
            slot(
                "luggage",
                None,
                &["suitcase", "backpack", "golf clubs", "stroller", "skis"],
                &["any luggage ?", "are you bringing anything big ?"],
                &["just a {v}", "i have a {v}", "only {v}"],
            ),
            slot(
                "contact_name",
                None,
                &["john", "maria", "kenji", "olga"],
                &["who is the ride for ?", "what name for the driver ?"],
                &["for {v}", "the name is {v}"],
            ),
            slot(
                "price_limit",
                None,
                &["20 dollars", "30 dollars", "cheapest", "no limit"],
                &["any price limit ?", "what is your budget ?"],
                &["under {v}", "max {v}"],
            ),
        ],
        &["central station", "airport", "city hall", "union square", "pier 39"],
        vec![
            multi(&["pickup_location", "pickup_time"], &["where and when should i pick you up ?"]),
            multi(&["car_type", "payment_method"], &["which car and how will you pay ?"]),
        ],
        &[
            "i need a taxi from {pickup_location}",
            "get me a ride to {dropoff_location}",
            "book a {car_type} for {contact_name}",
            "i need a cab",
        ],
    )
}

fn orderfood(ambiguity: f64) -> DomainSpec {
    base(
        "orderfood",
        ambiguity,
        vec![
            slot(
                "dish",
                None,
                &["pepperoni pizza", "pad thai", "cheeseburger", "caesar salad", "burrito", "ramen"],
                &["what would you like to order ?", "which dish ?"],
                &["i want {v}", "get me {v}", "{v} sounds good"],
            ),
            slot(
                "quantity",
                Some("number"),
                &["2", "3", "4", "6", "12"],
                &["how many would you like ?", "what quantity ?"],
                &["{v} of them", "i want {v}", "{v} orders"],
            ),
            slot(
                "delivery_time",
                Some("number"),
                &["asap", "6pm", "7:30", "noon", "8pm"],
                &["when should we deliver ?", "what time for delivery ?"],
                &["at {v}", "by {v}", "around {v}"],
            ),
            slot(
                "restaurant_name",
                Some("place"),
                &["dominos", "chipotle", "panda express", "subway", "wendys"],
                &["which restaurant ?", "where should i order from ?"],
                &["from {v}", "order from {v}"],
            ),
            slot(
                "address",
                Some("place"),
                &["123 elm road", "42 oak avenue", "9 pine lane"],
                &["what is the delivery address ?", "where should we deliver ?"],
                &["to {v}", "deliver to {v}", "i live at {v}"],
            ),
            slot(
                "payment_method",
                None,
                &["cash", "credit card", "paypal"],
                &["how will you pay ?", "what payment method ?"],
                &["with {v}", "by {v}"],
            ),
            slot(
                "size",
                None,
                &["small", "medium", "large", "family size"],
                &["what size ?", "which size would you like ?"],
                &["{v} please", "a {v} one"],
            ),
            slot(
                "drink",
                None,
                &["coke", "sprite", "lemonade", "iced tea"],
                &["anything to drink ?", "which drink ?"],
                &["a {v}", "add a {v}"],
            ),
            slot(
                "side",
                None,
                &["fries", "garlic bread", "onion rings", "coleslaw"],
                &["any sides ?", "would you like a side ?"],
                &["add {v}", "with {v}"],
            ),
        ],
        &["main street", "broadway", "college green", "market square", "sunset boulevard"],
        vec![
            multi(&["dish", "quantity"], &["what and how many ?"]),
            multi(&["delivery_time", "address"], &["when and where should we deliver ?"]),
        ],
        &[
            "i want to order {dish}",
            "order {dish} from {restaurant_name}",
            "get me some food",
            "i am hungry",
        ],
    )
}

fn events(ambiguity: f64) -> DomainSpec {
    base(
        "events",
        ambiguity,
        vec![
            slot(
                "event_name",
                None,
                &["hamilton", "coldplay", "swan lake", "comic con", "jazz fest"],
                &["which event ?", "what show are you interested in ?"],
                &["tickets for {v}", "i want to see {v}"],
            ),
            slot(
                "event_type",
                None,
                &["concert", "musical", "ballet", "festival", "comedy show"],
                &["what kind of event ?", "what type of show ?"],
                &["a {v}", "some {v}"],
            ),
            slot(
                "city",
                Some("place"),
                &["seattle", "boston", "chicago", "denver", "austin"],
                &["which city ?", "where are you located ?"],
                &["in {v}", "near {v}"],
            ),
            slot(
                "date",
                None,
                &["tomorrow", "tonight", "friday", "saturday", "this weekend"],
                &["which day ?", "for what date ?"],
                &["on {v}", "for {v}"],
            ),
            slot(
                "num_tickets",
                Some("number"),
                &["2", "3", "4", "5", "6"],
                &["how many tickets ?", "how many seats do you need ?"],
                &["{v} tickets", "i need {v}", "{v} seats"],
            ),
            slot(
                "start_time",
                Some("number"),
                &["7pm", "8pm", "2pm", "7:30pm", "9pm"],
                &["which showtime ?", "what time should it start ?"],
                &["at {v}", "the {v} show"],
            ),
            slot(
                "venue",
                Some("place"),
                &["madison square garden", "forum", "red rocks", "apollo theater"],
                &["which venue ?", "any venue preference ?"],
                &["at {v}", "the one at {v}"],
            ),
            slot(
                "price_range",
                None,
                &["cheap", "under 50 dollars", "vip", "premium"],
                &["what price range ?", "how much do you want to spend ?"],
                &["something {v}", "{v} is fine"],
            ),
            slot(
                "seat_section",
                None,
                &["balcony", "orchestra", "front row", "mezzanine", "floor"],
                &["which section ?", "where do you want to sit ?"],
                &["in the {v}", "{v} seats please"],
            ),
        ],
        &["springfield", "lincoln center", "hollywood", "arlington", "greenwich"],
        vec![
            multi(&["date", "start_time"], &["what day and time ?", "when do you want to go ?"]),
            multi(&["event_type", "city"], &["what kind of event and where ?"]),
        ],
        &[
            "find tickets for {event_name}",
            "any {event_type} in {city}",
            "i want to go out {date}",
            "show me events",
        ],
    )
}

fn movieticket(ambiguity: f64) -> DomainSpec {
    base(
        "movieticket",
        ambiguity,
        vec![
            slot(
                "movie_name",
                None,
                &["inception", "frozen", "dune", "avatar", "toy story"],
                &["which movie ?", "what do you want to watch ?"],
                &["{v} please", "i want to see {v}", "tickets for {v}"],
            ),
            slot(
                "num_tickets",
                Some("number"),
                &["2", "3", "4", "5"],
                &["how many tickets ?", "how many people ?"],
                &["{v} tickets", "{v} adults", "for {v} people"],
            ),
            slot(
                "showtime",
                Some("number"),
                &["7pm", "9:30pm", "noon", "4:15pm", "10pm"],
                &["which showtime ?", "what time ?"],
                &["at {v}", "the {v} show"],
            ),
            slot(
                "theater_name",
                Some("place"),
                &["amc", "regal", "cinemark", "alamo drafthouse"],
                &["which theater ?", "what cinema do you prefer ?"],
                &["at {v}", "the {v} one"],
            ),
            slot(
                "date",
                None,
                &["today", "tomorrow", "friday", "saturday"],
                &["which day ?", "for what date ?"],
                &["on {v}", "for {v}"],
            ),
            slot(
                "seat_type",
                None,
                &["aisle", "middle", "back row", "recliner"],
                &["any seat preference ?", "where do you want to sit ?"],
                &["{v} seats", "in the {v}"],
            ),
            slot(
                "format",
                None,
                &["imax", "3d", "standard", "dolby"],
                &["which format ?", "imax or regular ?"],
                &["in {v}", "{v} version"],
            ),
            slot(
                "genre",
                None,
                &["comedy", "horror", "action", "drama", "animated"],
                &["what genre ?", "what kind of movie ?"],
                &["a {v}", "some {v} movie"],
            ),
            slot(
                "city",
                Some("place"),
                &["seattle", "boston", "portland", "denver"],
                &["which city ?", "where are you ?"],
                &["in {v}", "near {v}"],
            ),
        ],
        &["lincoln", "westfield", "riverside", "oakland", "springfield"],
        vec![
            multi(&["date", "showtime"], &["what day and time ?", "when do you want to watch ?"]),
            multi(&["genre", "format"], &["what genre and format ?"]),
        ],
        &[
            "tickets for {movie_name}",
            "i want to watch {movie_name} {date}",
            "find a {genre} movie",
            "what is playing",
        ],
    )
}

pub fn builtin_domain(name: &str, ambiguity: f64) -> Result<DomainSpec> {
    let spec = match name {
        "reservation" => reservation(ambiguity),
        "taxi" => taxi(ambiguity),
        "orderfood" => orderfood(ambiguity),
        "events" => events(ambiguity),
        "movieticket" => movieticket(ambiguity),
        _ => {
            return Err(Error::Config(format!(
                "unknown domain `{name}` (expected one of {})",
                DOMAIN_NAMES.join(", ")
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn builtin_domains(ambiguity: f64) -> Result<Vec<DomainSpec>> {
    DOMAIN_NAMES.iter().map(|n| builtin_domain(n, ambiguity)).collect()
}
