//! Class histograms captured from running JVMs.

use heapgroups::ingestion::{parse_jmap, render_jmap};
use heapgroups::ClassRecord;

struct Capture {
    name: &'static str,
    text: &'static str,
    rows: usize,
    instances: u64,
    bytes: u64,
    first: (u64, u64, &'static str),
    middle: (u32, u64, u64, &'static str),
    last: (u32, &'static str, &'static str),
}

const BASE: &str = "java.base@25.0.2";

fn captures() -> Vec<Capture> {
    vec![
        Capture {
            name: "jwebserver_idle",
            text: include_str!("fixtures/jmap/jwebserver_idle.histo"),
            rows: 637,
            instances: 22165,
            bytes: 1372864,
            first: (4525, 197136, "[B"),
            middle: (319, 3, 64, "[Ljava.lang.constant.ConstantDesc;"),
            last: (637, "sun.nio.fs.NativeBuffers$1", BASE),
        },
        Capture {
            name: "jwebserver_live",
            text: include_str!("fixtures/jmap/jwebserver_live.histo"),
            rows: 649,
            instances: 39399,
            bytes: 1988792,
            first: (10379, 567160, "[B"),
            middle: (325, 2, 48, "java.time.ZoneRegion"),
            last: (649, "sun.util.resources.cldr.provider.CLDRLocaleDataMetaInfo", "jdk.localedata@25.0.2"),
        },
        Capture {
            name: "jwebserver_loaded",
            text: include_str!("fixtures/jmap/jwebserver_loaded.histo"),
            rows: 736,
            instances: 46829,
            bytes: 2448176,
            first: (12969, 883328, "[B"),
            middle: (369, 2, 64, "java.util.concurrent.ConcurrentHashMap$ForwardingNode"),
            last: (736, "sun.util.resources.cldr.provider.CLDRLocaleDataMetaInfo", "jdk.localedata@25.0.2"),
        },
        Capture {
            name: "jwebserver_verbose",
            text: include_str!("fixtures/jmap/jwebserver_verbose.histo"),
            rows: 706,
            instances: 48354,
            bytes: 3933032,
            first: (12200, 2136784, "[B"),
            middle: (354, 2, 80, "java.util.IdentityHashMap"),
            last: (706, "sun.util.resources.cldr.provider.CLDRLocaleDataMetaInfo", "jdk.localedata@25.0.2"),
        },
        Capture {
            name: "rmiregistry",
            text: include_str!("fixtures/jmap/rmiregistry.histo"),
            rows: 545,
            instances: 22171,
            bytes: 1060664,
            first: (1393, 185400, "java.lang.Class"),
            middle: (273, 2, 64, "java.util.Vector"),
            last: (545, "sun.security.provider.NativePRNG", BASE),
        },
    ]
}

fn footer_totals(text: &str) -> (u64, u64) {
    let line = text.lines().find(|l| l.starts_with("Total")).expect("footer");
    let mut fields = line.split_whitespace().skip(1).map(|f| f.parse::<u64>().unwrap());
    (fields.next().unwrap(), fields.next().unwrap())
}

#[test]
fn captures_round_trip_byte_for_byte() {
    for c in captures() {
        let records = parse_jmap(c.text).unwrap();
        assert_eq!(render_jmap(&records), c.text, "{}", c.name);
    }
}

#[test]
fn captured_fields_are_exact() {
    for c in captures() {
        let records = parse_jmap(c.text).unwrap();
        assert_eq!(records.len(), c.rows, "{}", c.name);
        let ranks: Vec<u32> = records.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, (1..=c.rows as u32).collect::<Vec<_>>(), "{}", c.name);

        let instances: u64 = records.iter().map(|r| r.instances).sum();
        let bytes: u64 = records.iter().map(|r| r.bytes).sum();
        assert_eq!((instances, bytes), (c.instances, c.bytes), "{}", c.name);
        assert_eq!(footer_totals(c.text), (c.instances, c.bytes), "{}", c.name);

        let first = &records[0];
        assert_eq!((first.instances, first.bytes, first.class_name.as_str()), c.first, "{}", c.name);
        assert_eq!(first.module.as_deref(), Some(BASE));

        let (rank, inst, b, class) = c.middle;
        let mid = &records[rank as usize - 1];
        assert_eq!(
            mid,
            &ClassRecord {
                rank,
                instances: inst,
                bytes: b,
                class_name: class.to_string(),
                module: Some(BASE.to_string()),
            },
            "{}",
            c.name
        );

        let last = records.last().unwrap();
        assert_eq!((last.rank, last.class_name.as_str()), (c.last.0, c.last.1), "{}", c.name);
        assert_eq!(last.module.as_deref(), Some(c.last.2));
    }
}

#[test]
fn jcmd_histogram_parses_with_pid_prefix() {
    let text = include_str!("fixtures/jmap/rmiregistry_jcmd.histo");
    let records = parse_jmap(text).unwrap();
    assert_eq!(records.len(), 545);
    assert_eq!(footer_totals(text), (22136, 1001408));
    assert_eq!(records.iter().map(|r| r.bytes).sum::<u64>(), 1001408);
    assert_eq!(records[1].instances, 4733);
    assert_eq!(records[1].bytes, 183232);
    // jcmd prints a pid line above the table; the body is the jmap layout
    let body = text.split_once('\n').unwrap().1;
    assert_eq!(render_jmap(&records), body);
}
