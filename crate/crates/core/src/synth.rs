//! Synthetic labelled corpus.
//!
//! Every contract starts from a clean ERC-721 template that fires none of the
//! built-in rules. Independent knobs then add optional components (a proxy
//! setter, a withdrawal vault, a batch mint, ...), some in a vulnerable form.
//! For the requested family one knob is tied to the label, so the family's
//! designated bit equals the planting flag; every other knob is noise.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use crate::corpus::LabelTable;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticContract {
    pub id: String,
    pub text: String,
    pub planted: bool,
}

/// Bit (0-based) that equals the planting flag for each family.
pub fn anchor_index(family: Family) -> usize {
    match family {
        Family::RiskyMutableProxy => 2,
        Family::Erc721Reentrancy => 2,
        Family::UnlimitedMinting => 0,
        Family::MissingRequirements => 0,
        Family::PublicBurn => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Absent,
    Safe,
    Vulnerable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Burn {
    Standard,
    NoEvent,
    Unchecked,
}

#[derive(Debug, Clone, Copy)]
struct Knobs {
    proxy: Part,
    vault: Part,
    open_mint: bool,
    batch_mint: bool,
    unchecked_price: bool,
    sale_toggle: bool,
    burn: Burn,
}

impl Knobs {
    fn clean() -> Self {
        Knobs {
            proxy: Part::Absent,
            vault: Part::Absent,
            open_mint: false,
            batch_mint: false,
            unchecked_price: false,
            sale_toggle: false,
            burn: Burn::Standard,
        }
    }

    fn random(rng: &mut rng::Rng) -> Self {
        let part = |rng: &mut rng::Rng| match rng.random_range(0..4) {
            0 | 1 => Part::Absent,
            2 => Part::Safe,
            _ => Part::Vulnerable,
        };
        Knobs {
            proxy: part(rng),
            vault: part(rng),
            open_mint: rng.random_bool(0.25),
            batch_mint: rng.random_bool(0.3),
            unchecked_price: rng.random_bool(0.25),
            sale_toggle: rng.random_bool(0.3),
            burn: *[Burn::Standard, Burn::Standard, Burn::NoEvent, Burn::Unchecked]
                .choose(rng)
                .unwrap(),
        }
    }

    /// Ties the family's anchor knob to `planted`, keeping a benign
    /// variant of the same component around for some clean contracts.
    fn force(&mut self, family: Family, planted: bool, rng: &mut rng::Rng) {
        let safe_or_absent = |rng: &mut rng::Rng| {
            if rng.random_bool(0.5) {
                Part::Safe
            } else {
                Part::Absent
            }
        };
        match family {
            Family::RiskyMutableProxy => {
                self.proxy = if planted { Part::Vulnerable } else { safe_or_absent(rng) }
            }
            Family::Erc721Reentrancy => {
                self.vault = if planted { Part::Vulnerable } else { safe_or_absent(rng) }
            }
            Family::UnlimitedMinting => self.open_mint = planted,
            Family::MissingRequirements => self.unchecked_price = planted,
            Family::PublicBurn => {
                self.burn = if planted {
                    Burn::Unchecked
                } else if rng.random_bool(0.5) {
                    Burn::NoEvent
                } else {
                    Burn::Standard
                }
            }
        }
    }
}

const NAMES: &[&str] = &[
    "Aurora", "Basilisk", "Cobalt", "Dune", "Ember", "Fjord", "Gale", "Harbor", "Iris", "Juniper",
    "Kestrel", "Lumen", "Mosaic", "Nimbus", "Onyx", "Pylon", "Quartz", "Rune", "Sable", "Tundra",
];

const COMMENTS: &[&str] = &[
    "// Mint, burn and proxy logic below is reviewed.",
    "/// @notice require(msg.sender == owner) is enforced upstream",
    "// 铸造与销毁逻辑 (mint / burn)",
    "/* onlyOwner, nonReentrant, emit Event(); delegatecall not used */",
    "// TODO: confirm timelock behaviour with auditors",
    "/// Ｆｕｌｌ-width note: safeTransferFrom(to) is fine here",
    "// withdraw() and balances[msg.sender] = 0 are unrelated",
];

fn comment(rng: &mut rng::Rng) -> &'static str {
    COMMENTS.choose(rng).unwrap()
}

fn render(name: &str, knobs: &Knobs, rng: &mut rng::Rng) -> String {
    let cap = 1000 * rng.random_range(1..=10u32);
    let price = rng.random_range(1..=9u32);
    let mut state = vec![
        format!("    uint256 public constant MAX_SUPPLY = {cap};"),
        "    uint256 public mintPrice;".to_string(),
        "    uint256 private _nextTokenId;".to_string(),
        "    string private _baseTokenURI;".to_string(),
        "    mapping(uint256 => bool) private _burnConfirmed;".to_string(),
        String::new(),
        "    event Minted(address indexed to, uint256 indexed tokenId);".to_string(),
        "    event Burned(uint256 indexed tokenId);".to_string(),
        "    event BurnConfirmed(uint256 indexed tokenId);".to_string(),
        "    event BaseURIUpdated(string uri);".to_string(),
        "    event MintPriceUpdated(uint256 price);".to_string(),
    ];

    let mut functions: Vec<String> = Vec::new();

    functions.push(
        "    function initialize(string memory baseURI) external onlyOwner {
        require(bytes(baseURI).length > 0, \"empty uri\");
        _baseTokenURI = baseURI;
        emit BaseURIUpdated(baseURI);
    }"
        .to_string(),
    );

    let guard = if knobs.open_mint { "" } else { " onlyOwner" };
    if knobs.batch_mint {
        functions.push(format!(
            "    function mint(address to, uint256 quantity) external payable{guard} whenNotPaused nonReentrant {{
        require(to != address(0), \"zero address\");
        require(msg.value >= mintPrice * quantity, \"insufficient fee\");
        require(_nextTokenId + quantity <= MAX_SUPPLY, \"sold out\");
        for (uint256 i = 0; i < quantity; i++) {{
            uint256 tokenId = _nextTokenId;
            _nextTokenId += 1;
            _safeMint(to, tokenId);
            emit Minted(to, tokenId);
        }}
    }}"
        ));
    } else {
        functions.push(format!(
            "    function mint(address to) external payable{guard} whenNotPaused nonReentrant {{
        require(to != address(0), \"zero address\");
        require(msg.value >= mintPrice, \"insufficient fee\");
        require(_nextTokenId < MAX_SUPPLY, \"sold out\");
        uint256 tokenId = _nextTokenId;
        _nextTokenId += 1;
        _safeMint(to, tokenId);
        emit Minted(to, tokenId);
    }}"
        ));
    }

    functions.push(
        "    function confirmBurn(uint256 tokenId) external {
        require(_isApprovedOrOwner(msg.sender, tokenId), \"not owner\");
        _burnConfirmed[tokenId] = true;
        emit BurnConfirmed(tokenId);
    }"
        .to_string(),
    );

    let ownership = if knobs.burn == Burn::Unchecked {
        ""
    } else {
        "\n        require(_isApprovedOrOwner(msg.sender, tokenId), \"not owner\");"
    };
    let burn_event = if knobs.burn == Burn::NoEvent {
        ""
    } else {
        "\n        emit Burned(tokenId);"
    };
    functions.push(format!(
        "    function burn(uint256 tokenId) external whenNotPaused {{
        require(_exists(tokenId), \"unknown token\");{ownership}
        require(_burnConfirmed[tokenId], \"unconfirmed\");
        delete _burnConfirmed[tokenId];
        _burn(tokenId);{burn_event}
    }}"
    ));

    let price_check = if knobs.unchecked_price {
        ""
    } else {
        "\n        require(price > 0, \"zero price\");"
    };
    functions.push(format!(
        "    function setMintPrice(uint256 price) external onlyOwner {{{price_check}
        mintPrice = price;
        emit MintPriceUpdated(price);
    }}"
    ));

    functions.push(
        "    function transferFrom(address from, address to, uint256 tokenId) public override whenNotPaused {
        require(to != address(0), \"zero address\");
        super.transferFrom(from, to, tokenId);
    }"
        .to_string(),
    );

    functions.push(
        "    function tokenURI(uint256 tokenId) public view override returns (string memory) {
        require(_exists(tokenId), \"unknown token\");
        return string(abi.encodePacked(_baseTokenURI, Strings.toString(tokenId)));
    }"
        .to_string(),
    );

    functions.push("    function pause() external onlyOwner {\n        _pause();\n    }".to_string());
    functions.push("    function unpause() external onlyOwner {\n        _unpause();\n    }".to_string());

    functions.push(
        "    function _exists(uint256 tokenId) internal view returns (bool) {
        return _ownerOf(tokenId) != address(0);
    }"
        .to_string(),
    );

    if rng.random_bool(0.5) {
        functions.push(
            "    function totalMinted() external view returns (uint256) {\n        return _nextTokenId;\n    }"
                .to_string(),
        );
    }
    if rng.random_bool(0.5) {
        functions.push(
            "    function remaining() external view returns (uint256) {\n        return MAX_SUPPLY - _nextTokenId;\n    }"
                .to_string(),
        );
    }

    if knobs.proxy != Part::Absent {
        state.push("    address public proxy;".to_string());
        state.push("    event ProxyUpdated(address indexed newProxy);".to_string());
        let guard = if knobs.proxy == Part::Vulnerable { "" } else { " onlyOwner" };
        functions.push(format!(
            "    function setProxy(address newProxy) external{guard} {{
        require(newProxy != address(0), \"zero address\");
        proxy = newProxy;
        emit ProxyUpdated(newProxy);
    }}"
        ));
        functions.push(
            "    function proxyTransfer(address from, address to, uint256 tokenId) external {
        require(msg.sender == proxy, \"not proxy\");
        _transfer(from, to, tokenId);
    }"
            .to_string(),
        );
    }

    if knobs.vault != Part::Absent {
        state.push("    mapping(address => uint256) public balances;".to_string());
        state.push("    event Deposited(address indexed account, uint256 amount);".to_string());
        state.push("    event Withdrawn(address indexed account, uint256 amount);".to_string());
        functions.push(
            "    function deposit() external payable {
        balances[msg.sender] += msg.value;
        emit Deposited(msg.sender, msg.value);
    }"
            .to_string(),
        );
        if knobs.vault == Part::Vulnerable {
            functions.push(
                "    function withdraw() external {
        uint256 amount = balances[msg.sender];
        require(amount > 0, \"nothing to withdraw\");
        (bool ok, ) = payable(msg.sender).call{value: amount}(\"\");
        require(ok, \"transfer failed\");
        balances[msg.sender] = 0;
        emit Withdrawn(msg.sender, amount);
    }"
                .to_string(),
            );
        } else {
            functions.push(
                "    function withdraw() external nonReentrant {
        uint256 amount = balances[msg.sender];
        require(amount > 0, \"nothing to withdraw\");
        balances[msg.sender] = 0;
        (bool ok, ) = payable(msg.sender).call{value: amount}(\"\");
        require(ok, \"transfer failed\");
        emit Withdrawn(msg.sender, amount);
    }"
                .to_string(),
            );
        }
    }

    if knobs.sale_toggle {
        state.push("    bool public saleActive;".to_string());
        functions.push(
            "    function toggleSale() external onlyOwner {\n        saleActive = !saleActive;\n    }".to_string(),
        );
    }

    functions.shuffle(rng);

    let mut out = String::new();
    out.push_str("// SPDX-License-Identifier: MIT\npragma solidity ^0.8.20;\n\n");
    out.push_str("import \"@openzeppelin/contracts/token/ERC721/ERC721.sol\";\n");
    out.push_str("import \"@openzeppelin/contracts/access/Ownable.sol\";\n");
    out.push_str("import \"@openzeppelin/contracts/utils/Pausable.sol\";\n");
    out.push_str("import \"@openzeppelin/contracts/utils/ReentrancyGuard.sol\";\n\n");
    out.push_str(comment(rng));
    out.push('\n');
    out.push_str(&format!(
        "contract {name} is ERC721, Ownable, Pausable, ReentrancyGuard {{\n"
    ));
    for line in &state {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&format!(
        "\n    constructor(address initialOwner) ERC721(\"{name} 收藏\", \"{sym}\") Ownable(initialOwner) {{
        require(initialOwner != address(0), \"zero owner\");
        mintPrice = {price} * 1e15;
    }}\n",
        sym = name[..3].to_uppercase()
    ));
    for f in &functions {
        out.push('\n');
        if rng.random_bool(0.3) {
            out.push_str("    ");
            out.push_str(comment(rng));
            out.push('\n');
        }
        out.push_str(f);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// The unmodified template (no optional components, every guard in place).
pub fn clean_contract(seed: u64) -> String {
    let mut rng = rng::seeded(seed);
    render("Clean", &Knobs::clean(), &mut rng)
}

/// Generates `n` contracts for `family`, of which `round(n * planted_fraction)`
/// carry the family's vulnerability. Ids are `<tag>_<index>` in lowercase.
pub fn generate(family: Family, n: usize, planted_fraction: f64, seed: u64) -> Result<Vec<SyntheticContract>> {
    if !(0.0..=1.0).contains(&planted_fraction) {
        return Err(Error::Config(format!(
            "planted fraction must lie in [0, 1], got {planted_fraction}"
        )));
    }
    let n_planted = (n as f64 * planted_fraction).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < n_planted).collect();
    flags.shuffle(&mut rng::seeded(seed));

    let tag = family.tag().to_lowercase();
    let width = n.to_string().len().max(4);
    Ok(flags
        .into_iter()
        .enumerate()
        .map(|(i, planted)| {
            let mut rng = rng::stream(seed, i as u64 + 1);
            let mut knobs = Knobs::random(&mut rng);
            knobs.force(family, planted, &mut rng);
            let name = format!("{}{}", NAMES.choose(&mut rng).unwrap(), i);
            SyntheticContract {
                id: format!("{tag}_{i:0width$}"),
                text: render(&name, &knobs, &mut rng),
                planted,
            }
        })
        .collect())
}

pub fn label_table(family: Family, contracts: &[SyntheticContract]) -> LabelTable {
    LabelTable {
        family,
        entries: contracts
            .iter()
            .map(|c| (c.id.clone(), u8::from(c.planted)))
            .collect(),
    }
}

/// Writes `<id>.sol` files into `dir` (created if needed).
pub fn write_contracts(contracts: &[SyntheticContract], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in contracts {
        let path = dir.join(format!("{}.sol", c.id));
        fs::write(&path, &c.text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
