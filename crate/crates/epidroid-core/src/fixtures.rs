//! Authored app models encoding cross-path dependency patterns, a random
//! model generator for property tests, and the brute-force reachability
//! oracle used by acceptance checks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::rngs::SmallRng;
use rand::{RngExt, SeedableRng};

use crate::model::{
    AppModel, Effect, EventKind, MutationScript, PageDef, PageSummary, TransitionDef,
    Value, VarDef, VarDomain, WidgetDef,
};
use crate::view::WidgetKind;

fn widget(id: &str, kind: WidgetKind) -> WidgetDef {
    WidgetDef {
        widget_id: id.into(),
        kind,
        text: None,
        binding: None,
        checked: None,
        expanded: None,
        item_count: None,
    }
}

fn button(id: &str, text: &str) -> WidgetDef {
    WidgetDef { text: Some(text.into()), ..widget(id, WidgetKind::Button) }
}

fn label(id: &str, text: &str) -> WidgetDef {
    WidgetDef { text: Some(text.into()), ..widget(id, WidgetKind::Label) }
}

fn bound_switch(id: &str, var: &str) -> WidgetDef {
    WidgetDef { binding: Some(var.into()), ..widget(id, WidgetKind::Switch) }
}

fn bound_radio(id: &str, var: &str) -> WidgetDef {
    WidgetDef { binding: Some(var.into()), ..widget(id, WidgetKind::RadioGroup) }
}

fn bound_container(id: &str, var: &str) -> WidgetDef {
    WidgetDef { binding: Some(var.into()), ..widget(id, WidgetKind::Container) }
}

fn input(id: &str, placeholder: &str) -> WidgetDef {
    WidgetDef { text: Some(placeholder.into()), ..widget(id, WidgetKind::Input) }
}

fn page(id: &str, activity: &str, widgets: Vec<WidgetDef>) -> PageDef {
    PageDef { page_id: id.into(), activity_name: activity.into(), widgets }
}

#[allow(clippy::too_many_arguments)]
fn transition(
    id: &str,
    source: &str,
    widget: &str,
    kind: EventKind,
    when_text: Option<&str>,
    guard: &str,
    effects: Vec<Effect>,
    target: &str,
    labels: &[String],
) -> TransitionDef {
    TransitionDef {
        transition_id: id.into(),
        source: source.into(),
        widget: widget.into(),
        event_kind: kind,
        when_text: when_text.map(str::to_string),
        guard: guard.into(),
        effects,
        target: target.into(),
        branch_labels: labels.iter().cloned().collect(),
    }
}

fn tap(
    id: &str,
    source: &str,
    widget: &str,
    guard: &str,
    effects: Vec<Effect>,
    target: &str,
    labels: &[String],
) -> TransitionDef {
    transition(id, source, widget, EventKind::Tap, None, guard, effects, target, labels)
}

fn labels(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i:03}")).collect()
}

fn one(label: &str) -> Vec<String> {
    vec![label.to_string()]
}

fn set_bool(var: &str, value: bool) -> Effect {
    Effect::Set { var: var.into(), value: Value::Bool(value) }
}

fn build(
    app_id: &str,
    entry: &str,
    variables: Vec<VarDef>,
    pages: Vec<PageDef>,
    transitions: Vec<TransitionDef>,
) -> AppModel {
    AppModel::assemble(app_id.into(), entry.into(), variables, pages, transitions)
        .expect("authored fixture validates")
}

/// Settings-gated player: re-entering the player after committing the
/// `webm_hd` profile unlocks a 44-label chain that forward exploration
/// never re-fires.
pub fn case1() -> AppModel {
    let variables = vec![
        VarDef {
            name: "profile_pending".into(),
            domain: VarDomain::Enum { members: vec!["standard".into(), "webm_hd".into()] },
            initial: Value::Symbol("standard".into()),
        },
        VarDef {
            name: "profile".into(),
            domain: VarDomain::Enum { members: vec!["standard".into(), "webm_hd".into()] },
            initial: Value::Symbol("standard".into()),
        },
        VarDef {
            name: "apply_armed".into(),
            domain: VarDomain::Boolean,
            initial: Value::Bool(false),
        },
    ];
    let pages = vec![
        page(
            "main",
            "MainActivity",
            vec![
                label("banner", "EpiTube"),
                button("open_library", "Library"),
                button("open_menu", "Menu"),
                label("promo1", "Editor picks"),
                label("promo2", "Trending"),
                label("tip", "Tip of the day"),
            ],
        ),
        page(
            "library",
            "LibraryActivity",
            vec![
                label("lib_header", "Your library"),
                input("video_search", "demo video"),
                label("row_dud1", "Watched"),
                label("row_dud2", "History"),
                button("back_main", "Back"),
            ],
        ),
        page(
            "player",
            "PlayerActivity",
            vec![
                button("play_btn", "Play"),
                label("osd", "00:00"),
                label("stats_hint", "Stats for nerds"),
                button("back_lib", "Back"),
            ],
        ),
        page(
            "player_buffering",
            "PlayerActivity",
            vec![
                button("decode_btn", "Decode"),
                label("buffer_bar", "Buffering"),
                button("back_buffer", "Back"),
            ],
        ),
        page(
            "player_decoded",
            "PlayerActivity",
            vec![
                button("render_btn", "Render"),
                label("decode_stats", "VP9"),
                button("back_decoded", "Back"),
            ],
        ),
        page(
            "player_hd",
            "PlayerActivity",
            vec![label("hd_banner", "1080p60"), button("exit_hd", "Exit")],
        ),
        page(
            "menu",
            "MenuActivity",
            vec![
                label("menu_header", "Menu"),
                button("open_settings", "Settings"),
                label("about_row", "About"),
                button("back_menu", "Back"),
            ],
        ),
        page(
            "settings",
            "SettingsActivity",
            vec![
                label("settings_header", "Media settings"),
                bound_radio("profile_radio", "profile_pending"),
                button("apply_btn", "Apply"),
                button("confirm_apply", "Confirm"),
                bound_radio("committed_display", "profile"),
                button("back_settings", "Back"),
            ],
        ),
    ];
    let gated1 = labels("g_buf_", 4);
    let gated2 = labels("g_dec_", 12);
    let gated3 = labels("g_hd_", 28);
    let transitions = vec![
        tap("nav_library", "main", "open_library", "", vec![], "library", &one("nav_library")),
        tap("nav_menu", "main", "open_menu", "", vec![], "menu", &one("nav_menu")),
        transition(
            "nav_player",
            "library",
            "video_search",
            EventKind::Input,
            Some("demo video"),
            "",
            vec![],
            "player",
            &one("nav_player"),
        ),
        tap("lib_back", "library", "back_main", "", vec![], "main", &[]),
        // Gated variant declared first so it wins while the guard holds.
        tap(
            "play_hd",
            "player",
            "play_btn",
            "profile == webm_hd",
            vec![],
            "player_buffering",
            &gated1,
        ),
        tap("play_base", "player", "play_btn", "", vec![], "player", &one("play_base")),
        tap("player_back", "player", "back_lib", "", vec![], "library", &[]),
        tap("decode", "player_buffering", "decode_btn", "", vec![], "player_decoded", &gated2),
        tap("buffer_back", "player_buffering", "back_buffer", "", vec![], "player", &[]),
        tap("render", "player_decoded", "render_btn", "", vec![], "player_hd", &gated3),
        tap("decoded_back", "player_decoded", "back_decoded", "", vec![], "player", &[]),
        tap("hd_exit", "player_hd", "exit_hd", "", vec![], "main", &[]),
        tap("nav_settings", "menu", "open_settings", "", vec![], "settings", &one("nav_settings")),
        tap("menu_back", "menu", "back_menu", "", vec![], "main", &[]),
        transition(
            "select_pending",
            "settings",
            "profile_radio",
            EventKind::Select,
            None,
            "",
            vec![Effect::SetFromEvent { var: "profile_pending".into() }],
            "settings",
            &one("sel_pending"),
        ),
        tap(
            "arm_apply",
            "settings",
            "apply_btn",
            "",
            vec![set_bool("apply_armed", true)],
            "settings",
            &one("arm_apply"),
        ),
        tap(
            "commit_apply",
            "settings",
            "confirm_apply",
            "apply_armed",
            vec![
                Effect::Copy { var: "profile".into(), from: "profile_pending".into() },
                set_bool("apply_armed", false),
            ],
            "settings",
            &one("commit_apply"),
        ),
        tap("settings_back", "settings", "back_settings", "", vec![], "main", &[]),
    ];
    let mut model = build("case1_player_settings", "main", variables, pages, transitions);
    model.mutation_scripts = vec![
        MutationScript {
            widget_id: "committed_display".into(),
            value: "webm_hd".into(),
            events: vec![
                crate::model::Event::select("profile_radio", "webm_hd"),
                crate::model::Event::tap("apply_btn"),
                crate::model::Event::tap("confirm_apply"),
            ],
        },
        MutationScript {
            widget_id: "committed_display".into(),
            value: "standard".into(),
            events: vec![
                crate::model::Event::select("profile_radio", "standard"),
                crate::model::Event::tap("apply_btn"),
                crate::model::Event::tap("confirm_apply"),
            ],
        },
    ];
    model.page_summaries = vec![
        PageSummary { page_id: "main".into(), summary: "home hub: library, menu, promotions".into() },
        PageSummary {
            page_id: "settings".into(),
            summary: "media settings: resolution, audio format, download configuration".into(),
        },
        PageSummary { page_id: "player".into(), summary: "video player with default media settings".into() },
        PageSummary { page_id: "library".into(), summary: "library with video search".into() },
        PageSummary { page_id: "menu".into(), summary: "application menu".into() },
    ];
    model.validate().expect("fixture revalidates");
    model
}

/// Labels carried by case1's profile-gated chain.
pub fn case1_gated_labels() -> BTreeSet<String> {
    labels("g_buf_", 4)
        .into_iter()
        .chain(labels("g_dec_", 12))
        .chain(labels("g_hd_", 28))
        .collect()
}

/// Precondition chain: subscribing to a creator unlocks both the feed
/// refresh (386 labels) and group creation (386 labels).
pub fn case2() -> AppModel {
    let variables = vec![
        VarDef { name: "subscribed".into(), domain: VarDomain::Boolean, initial: Value::Bool(false) },
        VarDef { name: "feed_items".into(), domain: VarDomain::Counter { max: 3 }, initial: Value::Count(0) },
    ];
    let pages = vec![
        page(
            "main",
            "MainActivity",
            vec![
                label("home_banner", "NewTube"),
                button("open_feed", "Feed"),
                button("open_groups", "Groups"),
                button("open_discover", "Discover"),
                label("promo", "What's new"),
            ],
        ),
        page(
            "feed",
            "FeedActivity",
            vec![
                bound_container("feed_list", "feed_items"),
                button("refresh_btn", "Refresh"),
                label("feed_hint", "Pull to refresh"),
                button("back", "Back"),
            ],
        ),
        page(
            "groups",
            "GroupsActivity",
            vec![
                label("group_header", "Subscription groups"),
                button("create_group_btn", "New group"),
                button("groups_back", "Back"),
            ],
        ),
        page(
            "group_created",
            "GroupsActivity",
            vec![label("success_banner", "Group created"), button("back_groups", "Back")],
        ),
        page(
            "discover",
            "DiscoverActivity",
            vec![
                button("open_search", "Search"),
                label("trending1", "Trending"),
                label("trending2", "Music"),
                button("discover_back", "Back"),
            ],
        ),
        page(
            "search",
            "SearchActivity",
            vec![
                input("search_box", "jazz channel"),
                label("search_hint", "Type to search"),
                button("search_back", "Back"),
            ],
        ),
        page(
            "creator",
            "CreatorActivity",
            vec![
                label("creator_name", "Jazz Channel"),
                bound_switch("subscribe_btn", "subscribed"),
                button("creator_back", "Back"),
            ],
        ),
    ];
    let feed_gated = labels("d_feed_", 386);
    let group_gated = labels("e_group_", 386);
    let transitions = vec![
        tap("nav_feed", "main", "open_feed", "", vec![], "feed", &one("nav_feed")),
        tap("nav_groups", "main", "open_groups", "", vec![], "groups", &one("nav_groups")),
        tap("nav_discover", "main", "open_discover", "", vec![], "discover", &one("nav_discover")),
        tap(
            "refresh_subscribed",
            "feed",
            "refresh_btn",
            "subscribed",
            vec![Effect::Set { var: "feed_items".into(), value: Value::Count(2) }],
            "feed",
            &feed_gated,
        ),
        tap("refresh_empty", "feed", "refresh_btn", "", vec![], "feed", &one("feed_empty")),
        tap("feed_back", "feed", "back", "", vec![], "main", &[]),
        tap(
            "create_subscribed",
            "groups",
            "create_group_btn",
            "subscribed",
            vec![],
            "group_created",
            &group_gated,
        ),
        tap("create_fail", "groups", "create_group_btn", "", vec![], "groups", &one("create_fail")),
        tap("groups_back_t", "groups", "groups_back", "", vec![], "main", &[]),
        tap("created_back", "group_created", "back_groups", "", vec![], "groups", &[]),
        tap("nav_search", "discover", "open_search", "", vec![], "search", &one("nav_search")),
        tap("discover_back_t", "discover", "discover_back", "", vec![], "main", &[]),
        transition(
            "nav_creator",
            "search",
            "search_box",
            EventKind::Input,
            Some("jazz channel"),
            "",
            vec![],
            "creator",
            &one("nav_creator"),
        ),
        tap("search_back_t", "search", "search_back", "", vec![], "discover", &[]),
        tap(
            "subscribe",
            "creator",
            "subscribe_btn",
            "",
            vec![Effect::Toggle { var: "subscribed".into() }],
            "creator",
            &labels("c_sub_", 3),
        ),
        tap("creator_back_t", "creator", "creator_back", "", vec![], "search", &[]),
    ];
    let mut model = build("case2_newpipe", "main", variables, pages, transitions);
    model.page_summaries = vec![
        PageSummary { page_id: "main".into(), summary: "home hub: feed, groups, discovery".into() },
        PageSummary { page_id: "feed".into(), summary: "subscription feed listing".into() },
        PageSummary { page_id: "groups".into(), summary: "subscription group management".into() },
        PageSummary { page_id: "creator".into(), summary: "creator channel page with subscribe control".into() },
    ];
    model.validate().expect("fixture revalidates");
    model
}

/// Labels unlocked by case2's subscription precondition.
pub fn case2_gated_labels() -> BTreeSet<String> {
    labels("d_feed_", 386).into_iter().chain(labels("e_group_", 386)).collect()
}

/// Enabling the workspace reveals a page that itself hosts a fresh MSE.
pub fn cascade() -> AppModel {
    let variables = vec![
        VarDef { name: "workspace_on".into(), domain: VarDomain::Boolean, initial: Value::Bool(false) },
        VarDef {
            name: "tool_mode".into(),
            domain: VarDomain::Enum { members: vec!["basic".into(), "pro".into()] },
            initial: Value::Symbol("basic".into()),
        },
    ];
    let pages = vec![
        page(
            "home",
            "HomeActivity",
            vec![
                label("intro", "Toolbox"),
                button("open_workspace", "Workspace"),
                button("open_tools", "Tools"),
                label("hint", "Enable the workspace in tools"),
            ],
        ),
        page(
            "tools",
            "ToolsActivity",
            vec![
                label("tools_header", "Tools"),
                bound_switch("enable_ws", "workspace_on"),
                button("tools_back", "Back"),
            ],
        ),
        page(
            "workspace",
            "WorkspaceActivity",
            vec![
                label("ws_banner", "Workspace"),
                bound_radio("mode_radio", "tool_mode"),
                button("run_btn", "Run"),
                button("ws_back", "Back"),
            ],
        ),
        page(
            "results",
            "ResultsActivity",
            vec![label("results_banner", "Pro results"), button("results_back", "Back")],
        ),
    ];
    let ws_gated = labels("w_ws_", 6);
    let pro_gated = labels("p_run_", 8);
    let transitions = vec![
        tap("ws_open", "home", "open_workspace", "workspace_on", vec![], "workspace", &ws_gated),
        tap("ws_locked", "home", "open_workspace", "", vec![], "home", &one("ws_locked")),
        tap("nav_tools", "home", "open_tools", "", vec![], "tools", &one("nav_tools")),
        tap(
            "toggle_ws",
            "tools",
            "enable_ws",
            "",
            vec![Effect::Toggle { var: "workspace_on".into() }],
            "tools",
            &one("toggle_ws"),
        ),
        tap("tools_back_t", "tools", "tools_back", "", vec![], "home", &[]),
        transition(
            "set_mode",
            "workspace",
            "mode_radio",
            EventKind::Select,
            None,
            "",
            vec![Effect::SetFromEvent { var: "tool_mode".into() }],
            "workspace",
            &one("set_mode"),
        ),
        tap("run_pro", "workspace", "run_btn", "tool_mode == pro", vec![], "results", &pro_gated),
        tap("run_basic", "workspace", "run_btn", "", vec![], "workspace", &one("run_basic")),
        tap("ws_back_t", "workspace", "ws_back", "", vec![], "home", &[]),
        tap("results_back_t", "results", "results_back", "", vec![], "workspace", &[]),
    ];
    build("cascade_workspace", "home", variables, pages, transitions)
}

/// Flaky navigation plus a decorative unbound toggle; the stabilization
/// and denoising stress fixture.
pub fn noise() -> AppModel {
    let variables = vec![
        VarDef { name: "filter_on".into(), domain: VarDomain::Boolean, initial: Value::Bool(false) },
    ];
    let pages = vec![
        page(
            "start",
            "StartActivity",
            vec![
                label("title", "Gallery"),
                button("open_gallery", "Open gallery"),
                button("open_about", "About"),
                widget("fancy_toggle", WidgetKind::Switch),
                label("deco", "Sparkles"),
            ],
        ),
        page(
            "gallery",
            "GalleryActivity",
            vec![
                label("photo1", "IMG_001"),
                label("photo2", "IMG_002"),
                bound_switch("filter_switch", "filter_on"),
                button("secret_btn", "Curated picks"),
                button("gallery_back", "Back"),
            ],
        ),
        page(
            "error_page",
            "ErrorActivity",
            vec![label("error_banner", "Something went wrong"), button("retry", "Retry")],
        ),
        page(
            "about",
            "AboutActivity",
            vec![label("about_text", "v1.0"), label("credits", "Credits"), button("about_back", "Back")],
        ),
    ];
    let secret = labels("n_sec_", 6);
    let transitions = vec![
        tap("nav_gallery", "start", "open_gallery", "", vec![], "gallery", &one("nav_gallery")),
        tap("nav_about", "start", "open_about", "", vec![], "about", &one("nav_about")),
        tap(
            "toggle_filter",
            "gallery",
            "filter_switch",
            "",
            vec![Effect::Toggle { var: "filter_on".into() }],
            "gallery",
            &one("toggle_filter"),
        ),
        tap("secret_filtered", "gallery", "secret_btn", "filter_on", vec![], "gallery", &secret),
        tap("secret_plain", "gallery", "secret_btn", "", vec![], "gallery", &one("secret_plain")),
        tap("gallery_back_t", "gallery", "gallery_back", "", vec![], "start", &[]),
        tap("nav_retry", "error_page", "retry", "", vec![], "start", &one("nav_retry")),
        tap("about_back_t", "about", "about_back", "", vec![], "start", &[]),
    ];
    let mut model = build("noise_gallery", "start", variables, pages, transitions);
    model.flaky_edges = vec![crate::model::FlakyEdge {
        transition_id: "nav_gallery".into(),
        probability: 0.10,
        alternate_target: "error_page".into(),
    }];
    model.validate().expect("fixture revalidates");
    model
}

/// Storefront with an inter-page cart dependency and a global currency
/// setting that gates branches on three pages.
pub fn shop() -> AppModel {
    let variables = vec![
        VarDef { name: "cart".into(), domain: VarDomain::Counter { max: 3 }, initial: Value::Count(0) },
        VarDef {
            name: "currency".into(),
            domain: VarDomain::Enum { members: vec!["usd".into(), "eur".into(), "yen".into()] },
            initial: Value::Symbol("usd".into()),
        },
    ];
    let pages = vec![
        page(
            "storefront",
            "StoreActivity",
            vec![
                label("shop_banner", "Shop"),
                button("item_card", "Add gadget"),
                bound_container("cart_preview", "cart"),
                button("open_checkout", "Checkout"),
                button("open_prefs", "Preferences"),
            ],
        ),
        page(
            "checkout",
            "CheckoutActivity",
            vec![
                label("checkout_header", "Checkout"),
                button("price_info", "Price details"),
                button("pay_btn", "Pay"),
                button("checkout_back", "Back"),
            ],
        ),
        page(
            "receipt",
            "ReceiptActivity",
            vec![
                label("receipt_banner", "Paid"),
                button("fx_note", "FX details"),
                button("receipt_back", "Back"),
            ],
        ),
        page(
            "prefs",
            "PrefsActivity",
            vec![
                label("prefs_header", "Preferences"),
                button("regional_banner", "Regional info"),
                bound_radio("currency_radio", "currency"),
                button("prefs_back", "Back"),
            ],
        ),
    ];
    let pay_gated = labels("s_pay_", 10);
    let transitions = vec![
        tap(
            "add_to_cart",
            "storefront",
            "item_card",
            "",
            vec![Effect::Inc { var: "cart".into() }],
            "storefront",
            &one("add_cart"),
        ),
        tap("nav_checkout", "storefront", "open_checkout", "", vec![], "checkout", &one("nav_checkout")),
        tap("nav_prefs", "storefront", "open_prefs", "", vec![], "prefs", &one("nav_prefs")),
        tap("pay_full", "checkout", "pay_btn", "cart >= 1", vec![], "receipt", &pay_gated),
        tap("pay_empty", "checkout", "pay_btn", "", vec![], "checkout", &one("pay_empty")),
        tap("price_eur", "checkout", "price_info", "currency == eur", vec![], "checkout", &labels("x_price_", 2)),
        tap("price_plain", "checkout", "price_info", "", vec![], "checkout", &one("price_plain")),
        tap("checkout_back_t", "checkout", "checkout_back", "", vec![], "storefront", &[]),
        tap("fx_eur", "receipt", "fx_note", "currency == eur", vec![], "receipt", &labels("x_fx_", 2)),
        tap("fx_plain", "receipt", "fx_note", "", vec![], "receipt", &one("fx_plain")),
        tap("receipt_back_t", "receipt", "receipt_back", "", vec![], "storefront", &[]),
        tap("banner_eur", "prefs", "regional_banner", "currency == eur", vec![], "prefs", &labels("x_banner_", 2)),
        tap("banner_plain", "prefs", "regional_banner", "", vec![], "prefs", &one("banner_plain")),
        transition(
            "set_currency",
            "prefs",
            "currency_radio",
            EventKind::Select,
            None,
            "",
            vec![Effect::SetFromEvent { var: "currency".into() }],
            "prefs",
            &one("set_currency"),
        ),
        tap("prefs_back_t", "prefs", "prefs_back", "", vec![], "storefront", &[]),
    ];
    let mut model = build("shop_currency", "storefront", variables, pages, transitions);
    model.global_variables = BTreeSet::from(["currency".to_string()]);
    model.validate().expect("fixture revalidates");
    model
}

/// A model with widgets but no state variables at all.
pub fn no_mse() -> AppModel {
    let pages = vec![
        page(
            "only",
            "OnlyActivity",
            vec![label("greeting", "Hello"), button("poke", "Poke"), button("go", "Go")],
        ),
        page("second", "SecondActivity", vec![label("done", "Done"), button("back", "Back")]),
    ];
    let transitions = vec![
        tap("poke_t", "only", "poke", "", vec![], "only", &one("poke")),
        tap("go_t", "only", "go", "", vec![], "second", &one("go")),
        tap("back_t", "second", "back", "", vec![], "only", &[]),
    ];
    build("no_mse", "only", vec![], pages, transitions)
}

/// The bundled fixture suite, in canonical order.
pub fn suite() -> Vec<AppModel> {
    vec![case1(), case2(), cascade(), noise(), shop()]
}

/// Parameters for the random model generator.
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub max_pages: usize,
    pub max_variables: usize,
    pub decoys_per_page: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams { max_pages: 8, max_variables: 4, decoys_per_page: 2 }
    }
}

/// Deterministically generate a valid model with a guard-free navigation
/// skeleton, one mutation widget per variable, and guarded transitions
/// that always include at least one inter-page dependency.
pub fn generate_random_model(params: &GeneratorParams, seed: u64) -> AppModel {
    assert!(params.max_pages <= 12 && params.max_variables <= 6, "params within bounds");
    let mut rng = SmallRng::seed_from_u64(seed);
    let n_pages = rng.random_range(3..=params.max_pages.max(3));
    let n_vars = rng.random_range(1..=params.max_variables.max(1));

    let mut variables = Vec::new();
    let mut pages: Vec<PageDef> = (0..n_pages)
        .map(|i| page(&format!("p{i}"), &format!("Activity{i}"), vec![]))
        .collect();
    let mut transitions = Vec::new();

    // Navigation skeleton: every page reachable from p0 and back.
    for i in 1..n_pages {
        let from = rng.random_range(0..i);
        let nav_id = format!("nav_{i}");
        pages[from].widgets.push(button(&format!("go_{i}"), &format!("Go {i}")));
        transitions.push(tap(
            &nav_id,
            &format!("p{from}"),
            &format!("go_{i}"),
            "",
            vec![],
            &format!("p{i}"),
            &one(&format!("l_nav_{i}")),
        ));
        pages[i].widgets.push(button(&format!("home_{i}"), "Home"));
        transitions.push(tap(
            &format!("ret_{i}"),
            &format!("p{i}"),
            &format!("home_{i}"),
            "",
            vec![],
            "p0",
            &[],
        ));
    }

    for p in pages.iter_mut() {
        for d in 0..params.decoys_per_page {
            p.widgets.push(label(&format!("{}_decor{d}", p.page_id), "..."));
        }
    }

    // Variables, their mutation widgets, and guarded consumers.
    let mut bool_vars: Vec<String> = Vec::new();
    for k in 0..n_vars {
        let host = rng.random_range(0..n_pages);
        let name = format!("v{k}");
        let kind = rng.random_range(0..3u8);
        let guard_atom = match kind {
            0 => {
                variables.push(VarDef {
                    name: name.clone(),
                    domain: VarDomain::Boolean,
                    initial: Value::Bool(false),
                });
                pages[host].widgets.push(bound_switch(&format!("sw_{k}"), &name));
                transitions.push(tap(
                    &format!("mut_{k}"),
                    &format!("p{host}"),
                    &format!("sw_{k}"),
                    "",
                    vec![Effect::Toggle { var: name.clone() }],
                    &format!("p{host}"),
                    &one(&format!("l_mut_{k}")),
                ));
                bool_vars.push(name.clone());
                name.clone()
            }
            1 => {
                let symbols: Vec<String> =
                    (0..rng.random_range(2..=3)).map(|s| format!("opt{s}")).collect();
                let chosen = symbols[rng.random_range(1..symbols.len())].clone();
                variables.push(VarDef {
                    name: name.clone(),
                    domain: VarDomain::Enum { members: symbols },
                    initial: Value::Symbol("opt0".into()),
                });
                pages[host].widgets.push(bound_radio(&format!("rd_{k}"), &name));
                transitions.push(transition(
                    &format!("mut_{k}"),
                    &format!("p{host}"),
                    &format!("rd_{k}"),
                    EventKind::Select,
                    None,
                    "",
                    vec![Effect::SetFromEvent { var: name.clone() }],
                    &format!("p{host}"),
                    &one(&format!("l_mut_{k}")),
                ));
                format!("{name} == {chosen}")
            }
            _ => {
                variables.push(VarDef {
                    name: name.clone(),
                    domain: VarDomain::Counter { max: 1 },
                    initial: Value::Count(0),
                });
                pages[host].widgets.push(bound_container(&format!("ct_{k}"), &name));
                pages[host].widgets.push(button(&format!("add_{k}"), "Add"));
                pages[host].widgets.push(button(&format!("clr_{k}"), "Clear"));
                transitions.push(tap(
                    &format!("mut_{k}"),
                    &format!("p{host}"),
                    &format!("add_{k}"),
                    "",
                    vec![Effect::Inc { var: name.clone() }],
                    &format!("p{host}"),
                    &one(&format!("l_mut_{k}")),
                ));
                transitions.push(tap(
                    &format!("clear_{k}"),
                    &format!("p{host}"),
                    &format!("clr_{k}"),
                    "",
                    vec![Effect::Dec { var: name.clone() }],
                    &format!("p{host}"),
                    &one(&format!("l_clr_{k}")),
                ));
                format!("{name} >= 1")
            }
        };

        // Guarded consumer on a different page when possible (always for v0,
        // making the inter-page dependency unconditional).
        let consumer = if n_pages > 1 {
            let mut c = rng.random_range(0..n_pages);
            if k == 0 || rng.random_range(0..4u8) > 0 {
                while c == host {
                    c = rng.random_range(0..n_pages);
                }
            }
            c
        } else {
            host
        };
        let gate_widget = format!("gate_{k}");
        pages[consumer].widgets.push(button(&gate_widget, "Gated"));
        let gated_labels = labels(&format!("l_gate_{k}_"), rng.random_range(2..=4));
        transitions.push(tap(
            &format!("gated_{k}"),
            &format!("p{consumer}"),
            &gate_widget,
            &guard_atom,
            vec![],
            &format!("p{consumer}"),
            &gated_labels,
        ));
        transitions.push(tap(
            &format!("plain_{k}"),
            &format!("p{consumer}"),
            &gate_widget,
            "",
            vec![],
            &format!("p{consumer}"),
            &one(&format!("l_plain_{k}")),
        ));
    }

    // Guards stay single-atom: replaying under a conjunction would require
    // cross-plan state persistence that bounded expansion does not promise.
    let _ = bool_vars;

    build(&format!("generated_{seed}"), "p0", variables, pages, transitions)
}

/// Exhaustive breadth-first search over the (page, valuation) product
/// space. With `allow_mutations` false, transitions whose effects write a
/// guard-read variable are excluded.
pub fn brute_force_reachable_labels(model: &AppModel, allow_mutations: bool) -> BTreeSet<String> {
    let guard_read: BTreeSet<String> = model
        .transitions
        .iter()
        .filter_map(|t| model.guard(&t.transition_id))
        .flat_map(|g| g.variables())
        .collect();
    let enabled: Vec<&TransitionDef> = model
        .transitions
        .iter()
        .filter(|t| {
            allow_mutations
                || !t.effects.iter().any(|e| guard_read.contains(e.var()))
        })
        .collect();

    let start = (model.entry_page.clone(), model.initial_valuation());
    let mut seen = BTreeSet::from([start.clone()]);
    let mut frontier = VecDeque::from([start]);
    let mut covered = BTreeSet::new();
    let cap = 100_000usize;

    while let Some((page, valuation)) = frontier.pop_front() {
        for t in &enabled {
            if t.source != page {
                continue;
            }
            let guard_ok = model
                .guard(&t.transition_id)
                .map(|g| g.eval(&valuation))
                .unwrap_or(true);
            if !guard_ok {
                continue;
            }
            // Enumerate event payload choices for set_from_event effects.
            let payload_choices: Vec<Option<String>> = if t
                .effects
                .iter()
                .any(|e| matches!(e, Effect::SetFromEvent { .. }))
            {
                let var = t
                    .effects
                    .iter()
                    .find_map(|e| match e {
                        Effect::SetFromEvent { var } => Some(var.clone()),
                        _ => None,
                    })
                    .expect("set_from_event present");
                match &model.domains()[&var] {
                    VarDomain::Enum { members } => members.iter().cloned().map(Some).collect(),
                    _ => vec![None],
                }
            } else {
                vec![None]
            };

            for payload in payload_choices {
                let mut valuation = valuation.clone();
                for effect in &t.effects {
                    apply_effect_pure(model, &mut valuation, effect, payload.as_deref());
                }
                covered.extend(t.branch_labels.iter().cloned());
                let mut targets = vec![t.target.clone()];
                if allow_mutations {
                    if let Some((p, alt)) = model.flaky(&t.transition_id) {
                        if *p > 0.0 {
                            targets.push(alt.clone());
                        }
                    }
                }
                for target in targets {
                    let node = (target, valuation.clone());
                    if seen.len() < cap && seen.insert(node.clone()) {
                        frontier.push_back(node);
                    }
                }
            }
        }
    }
    covered
}

fn apply_effect_pure(
    model: &AppModel,
    valuation: &mut BTreeMap<String, Value>,
    effect: &Effect,
    payload: Option<&str>,
) {
    let name = effect.var().to_string();
    let domain = &model.domains()[&name];
    let current = valuation[&name].clone();
    let next = match effect {
        Effect::Set { value, .. } => value.clone(),
        Effect::Toggle { .. } => match current {
            Value::Bool(b) => Value::Bool(!b),
            other => other,
        },
        Effect::Inc { .. } => match (current, domain) {
            (Value::Count(n), VarDomain::Counter { max }) => Value::Count((n + 1).min(*max)),
            (other, _) => other,
        },
        Effect::Dec { .. } => match current {
            Value::Count(n) => Value::Count(n.saturating_sub(1)),
            other => other,
        },
        Effect::Copy { from, .. } => valuation[from].clone(),
        Effect::SetFromEvent { .. } => match payload {
            Some(symbol) => Value::Symbol(symbol.to_string()),
            None => current,
        },
    };
    if domain.contains(&next) {
        valuation.insert(name, next);
    }
}

/// True when the guard expressions and effects of `model` make the label
/// gated: reachable only with mutations allowed.
pub fn gated_labels(model: &AppModel) -> BTreeSet<String> {
    let with = brute_force_reachable_labels(model, true);
    let without = brute_force_reachable_labels(model, false);
    with.difference(&without).cloned().collect()
}
