/* stand-in for https://wallet.nimiq.com/js/i18n.js */
(function () { self.loaded = (self.loaded || []).concat("https://wallet.nimiq.com/js/i18n.js"); })();
